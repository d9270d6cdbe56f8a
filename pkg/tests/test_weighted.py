"""Ambient presets, the u_star measurement, xi, and the weighted product."""

import numpy as np
import pytest

from fsilab.ambient import ambient_preset, r_polynomial, u_star_norm
from fsilab.grid import build_grid, divergence
from fsilab.state import State, mean_functional, project_h0
from fsilab.weighted import (
    AmbientTooLarge,
    build_metric,
    norm_equivalence_bounds,
    standard_gram,
    standard_inner,
    weighted_inner,
    xi_parameter,
)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------


def test_preset_zero():
    g = build_grid(10, 10, 1.0, 1.0)
    U = ambient_preset("zero", 1.0, g)
    assert np.abs(U.U1).max() == 0.0 and np.abs(U.U2).max() == 0.0
    assert u_star_norm(U) == 0.0


def test_unknown_preset_rejected():
    g = build_grid(10, 10, 1.0, 1.0)
    with pytest.raises(ValueError, match="unknown ambient preset"):
        ambient_preset("vortex", 0.1, g)
    with pytest.raises(ValueError, match="nonnegative"):
        ambient_preset("zero", -1.0, g)


@pytest.mark.parametrize("name", ["compressive", "uniform-shear", "solenoidal"])
def test_presets_impermeable_boundary(name):
    g = build_grid(12, 10, 1.5, 0.7)
    U = ambient_preset(name, 0.3, g)
    assert np.abs(U.U1[0, :]).max() < 1e-12
    assert np.abs(U.U1[-1, :]).max() < 1e-12
    assert np.abs(U.U2[:, 0]).max() < 1e-12
    assert np.abs(U.U2[:, -1]).max() < 1e-12


def test_compressive_divergence_active():
    g = build_grid(12, 12, 1.0, 1.0)
    U = ambient_preset("compressive", 0.2, g)
    assert np.abs(U.div).max() > 0.1  # material derivative is active
    assert np.abs(U.u_omega).max() > 0.1


def test_solenoidal_discrete_divergence_second_order():
    # on a square tensor grid the centered divergence of the trig
    # streamfunction field cancels identically
    g = build_grid(12, 12, 1.0, 1.0)
    U = ambient_preset("solenoidal", 0.3, g)
    assert np.abs(divergence(g, U.U1, U.U2)[1:-1, 1:-1]).max() < 1e-13
    # anisotropic node counts break the exact cancellation; the residual
    # then converges at second order
    errs = []
    for nx, ny in ((15, 21), (31, 43)):
        g = build_grid(nx, ny, 1.0, 1.0)
        U = ambient_preset("solenoidal", 0.3, g)
        errs.append(np.abs(divergence(g, U.U1, U.U2)[1:-1, 1:-1]).max())
    assert 3.5 <= errs[0] / errs[1] <= 4.5


# ---------------------------------------------------------------------------
# u_star
# ---------------------------------------------------------------------------


def test_u_star_compressive_example_and_sampling_oracle():
    g = build_grid(16, 16, 1.0, 1.0)
    s = 0.1
    U = ambient_preset("compressive", s, g)
    expected = s + s * np.pi + (s + s * np.pi + s * np.pi**2)
    assert u_star_norm(U) == pytest.approx(expected, rel=1e-14)

    # dense-sampling oracle for the three sup terms
    xf = np.linspace(0.0, 1.0, 200001)
    sup_u = np.abs(s * np.sin(np.pi * xf)).max()
    sup_div = np.abs(s * np.pi * np.cos(np.pi * xf)).max()
    c2 = (np.abs(s * np.sin(np.pi * xf)).max()
          + np.abs(s * np.pi * np.cos(np.pi * xf)).max()
          + np.abs(s * np.pi**2 * np.sin(np.pi * xf)).max())
    assert u_star_norm(U) == pytest.approx(sup_u + sup_div + c2, rel=1e-8)


def test_u_star_positive_homogeneity():
    g = build_grid(10, 10, 1.0, 1.0)
    base = u_star_norm(ambient_preset("uniform-shear", 1.0, g))
    for c in (0.25, 2.0, 7.5):
        assert u_star_norm(ambient_preset("uniform-shear", c, g)) == pytest.approx(
            c * base, rel=1e-13)


# ---------------------------------------------------------------------------
# xi
# ---------------------------------------------------------------------------


def test_xi_matches_root_finder_oracle():
    C1 = C2 = 1.0
    r = 0.01
    xi = xi_parameter(C1, C2, r)
    roots = np.roots([C1 + C2 * r, C2 * r - 0.5, C2 * r])
    smaller = min(roots)
    assert xi == pytest.approx(smaller, abs=1e-12)
    assert xi == pytest.approx(0.02135, abs=5e-6)  # scalar evaluation


def test_xi_zero_ambient_exact():
    assert xi_parameter(1.0, 1.0, 0.0) == 0.0
    assert xi_parameter(0.3, 2.0, 0.0) == 0.0


def test_xi_too_large_raises():
    # radicand 0.09 - 0.96 < 0
    with pytest.raises(AmbientTooLarge):
        xi_parameter(1.0, 1.0, 0.2)


def test_xi_root_residual_and_monotonicity():
    rs = np.linspace(0.0, 0.03, 40)
    xis = [xi_parameter(1.0, 1.0, r) for r in rs]
    for r, xi in zip(rs, xis):
        res = (1.0 + r) * xi**2 + (r - 0.5) * xi + r
        assert abs(res) < 1e-12
    assert np.all(np.diff(xis) > 0.0)


def test_xi_rejects_bad_constants():
    with pytest.raises(ValueError, match="positive"):
        xi_parameter(0.0, 1.0, 0.01)
    with pytest.raises(ValueError, match="nonnegative"):
        xi_parameter(1.0, 1.0, -0.01)


# ---------------------------------------------------------------------------
# metric
# ---------------------------------------------------------------------------


def test_metric_zero_ambient_reduces_to_standard(model_zero_12):
    _, U, metric, _ = model_zero_12
    assert metric.r_u == 0.0 and metric.xi == 0.0 and metric.alpha == 0.0
    assert np.abs(metric.h_alpha).max() == 0.0
    diff = abs(metric.gram() - standard_gram(metric.space)).max()
    assert diff <= 1e-12


def test_metric_parameters(model_compressive_12):
    _, U, metric, _ = model_compressive_12
    star = u_star_norm(U)
    assert metric.alpha == pytest.approx(2.0 * star, rel=1e-14)
    assert metric.r_u == pytest.approx(r_polynomial(star), rel=1e-14)
    assert metric.xi > 0.0
    # g is the affine extension of the endpoint normals
    assert metric.g[0] == pytest.approx(-1.0)
    assert metric.g[-1] == pytest.approx(1.0)
    res = (metric.C1 + metric.C2 * metric.r_u) * metric.xi**2 \
        + (metric.C2 * metric.r_u - 0.5) * metric.xi + metric.C2 * metric.r_u
    assert abs(res) < 1e-12


def test_metric_gram_spd(model_compressive_12, rng):
    _, _, metric, _ = model_compressive_12
    G = metric.gram()
    Gd = G if isinstance(G, np.ndarray) else G.toarray()
    vals = np.linalg.eigvalsh(Gd)
    assert vals.min() > 0.0


def test_metric_gram_matches_matrix_free_inner(model_compressive_12, rng):
    # the dense Gram assembly and the solve-based inner product are
    # independent code paths; they must agree
    _, _, metric, _ = model_compressive_12
    G = metric.gram()
    for _ in range(5):
        v = metric.space.random_state(rng)
        w = metric.space.random_state(rng)
        dense = float(w @ (G @ v))
        free = float(np.real(metric.inner(v, w)))
        assert dense == pytest.approx(free, rel=1e-10)


def test_weighted_inner_matches_standard_at_zero_ambient(model_zero_12, rng):
    grid, U, metric, gen = model_zero_12
    space = metric.space
    for _ in range(5):
        v = space.random_state(rng)
        w = space.random_state(rng)
        phi, psi = space.to_state(v), space.to_state(w)
        assert weighted_inner(phi, psi, metric) == pytest.approx(
            standard_inner(phi, psi, space), rel=1e-12)


def test_weighted_inner_conjugate_symmetry_and_positivity(model_compressive_12, rng):
    _, _, metric, _ = model_compressive_12
    space = metric.space
    v = space.random_state(rng) + 1j * space.random_state(rng)
    w = space.random_state(rng) + 1j * space.random_state(rng)
    assert abs(metric.inner(v, w) - np.conj(metric.inner(w, v))) \
        <= 1e-12 * metric.norm(v) * metric.norm(w)
    assert np.real(metric.inner(v, v)) > 0.0
    assert abs(np.imag(metric.inner(v, v))) < 1e-12 * np.real(metric.inner(v, v))


def test_weighted_inner_grid_mismatch_rejected(model_zero_12):
    grid, _, metric, _ = model_zero_12
    other = build_grid(10, 10, 1.0, 1.0)
    phi = State.zeros(other)
    with pytest.raises(ValueError, match="grid"):
        weighted_inner(phi, phi, metric)


def test_build_metric_too_large_amplitude():
    g = build_grid(10, 10, 1.0, 1.0)
    U = ambient_preset("compressive", 10.0, g)
    with pytest.raises(AmbientTooLarge):
        build_metric(U, 1.0, 1.0)


# ---------------------------------------------------------------------------
# mean functional / projection
# ---------------------------------------------------------------------------


def test_mean_functional_examples():
    g = build_grid(10, 10, 1.0, 1.0)
    phi = State.zeros(g)
    assert mean_functional(phi) == 0.0
    phi.p[:] = 1.0
    assert mean_functional(phi) == pytest.approx(1.0, rel=1e-14)
    # clamped w1 with quadrature integral exactly -1
    x = g.xcoords()
    shape = x**2 * (1 - x) ** 2
    pb = np.full(g.n_beam, g.hx)
    pb[0] = pb[-1] = g.hx / 2
    c = -1.0 / (pb * shape).sum()
    phi.w1 = c * shape
    assert mean_functional(phi) == pytest.approx(0.0, abs=1e-13)


def test_project_h0_properties(rng):
    g = build_grid(10, 10, 1.0, 1.0)
    phi = State.zeros(g)
    phi.p = rng.standard_normal(g.shape)
    phi.w1[1:-1] = rng.standard_normal(g.nx)
    proj = project_h0(phi)
    assert abs(mean_functional(proj)) < 1e-12
    again = project_h0(proj)
    assert np.abs(again.p - proj.p).max() < 1e-14
    # member of the subspace is unchanged
    assert np.abs(proj.w1 - phi.w1).max() == 0.0
    # pure pressure shift
    phi2 = State.zeros(g)
    phi2.p[:] = 1.0
    assert np.abs(project_h0(phi2).p).max() < 1e-14


# ---------------------------------------------------------------------------
# norm equivalence
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("s,C2", [(0.01, 0.1), (0.05, 0.01)])
def test_norm_equivalence_bounds_compressive(s, C2):
    g = build_grid(12, 12, 1.0, 1.0)
    U = ambient_preset("compressive", s, g)
    metric = build_metric(U, 1.0, C2)
    c1, c2 = norm_equivalence_bounds(metric)
    assert 0.5 <= c1 <= c2 <= 2.0


def test_norm_equivalence_tends_to_one():
    g = build_grid(12, 12, 1.0, 1.0)
    U = ambient_preset("compressive", 1e-3, g)
    metric = build_metric(U, 1.0, 1.0)
    c1, c2 = norm_equivalence_bounds(metric)
    assert 0.9 <= c1 <= c2 <= 1.1
