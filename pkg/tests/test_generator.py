"""Generator assembly: rows, invariance, adjoint, kernel, commutators."""

import numpy as np
import pytest
import sympy

from fsilab.generator import (
    NoKernelFound,
    Params,
    apply_generator,
    assemble_generator,
    commutator_check_1d,
    commutator_check_2d,
    h0_restricted_sigma_min,
    kernel_vector,
    numerical_adjoint,
)
from fsilab.ambient import ambient_preset
from fsilab.grid import build_grid, clamped_fourth_matrix, operators
from fsilab.state import State, mean_functional
from fsilab.weighted import build_metric
from tests.conftest import make_model


def test_zero_state_maps_to_zero(model_zero_12):
    _, _, _, gen = model_zero_12
    v = np.zeros(gen.n_dof)
    assert np.abs(gen.G @ v).max() == 0.0


def test_linearity(model_compressive_12, rng):
    _, _, _, gen = model_compressive_12
    x = rng.standard_normal(gen.n_dof)
    y = rng.standard_normal(gen.n_dof)
    lhs = gen.G @ (2.0 * x - 3.5 * y)
    rhs = 2.0 * (gen.G @ x) - 3.5 * (gen.G @ y)
    assert np.abs(lhs - rhs).max() < 1e-12 * max(1.0, np.abs(rhs).max())


def test_plate_row_on_clamped_quartic(model_zero_16):
    grid, _, metric, gen = model_zero_16
    x = grid.xcoords()
    phi = State.zeros(grid)
    phi.w1 = x**2 * (1 - x) ** 2
    out = gen.apply_state(phi)
    assert np.abs(out.p).max() < 1e-12
    assert np.abs(out.u1).max() < 1e-12
    assert np.abs(out.w1).max() < 1e-12  # w2 = 0 and U = 0
    # the interface-mass closure scales the plate row by 1/(1 + hy/2);
    # away from the ends the mimetic fourth difference equals 24
    scale = 1.0 + 0.5 * grid.hy
    a4w = clamped_fourth_matrix(grid) @ phi.w1[1:-1]
    assert np.abs(scale * out.w2[1:-1] + a4w).max() < 1e-9
    assert np.abs(a4w[2:-2] - 24.0).max() < 1e-8


def test_pressure_rows_for_affine_pressure(model_zero_16):
    grid, _, _, gen = model_zero_16
    _, Y = grid.meshgrid()
    phi = State.zeros(grid)
    phi.p = Y.copy()
    out = gen.apply_state(phi)
    # u-row is -grad p = (0, -1); exact since p is affine
    sp_ = gen.space
    assert np.abs(out.u1[sp_.u1_mask]).max() < 1e-11
    assert np.abs(out.u2[sp_.u2_mask] + 1.0).max() < 1e-11
    # p-row: -div u - stabilization, both vanish for this state
    assert np.abs(out.p).max() < 1e-11
    # trace p|_Omega = 0; the interface-mass correction leaves an O(hy)
    # remainder from the one-sided normal gradient on the interface row
    assert np.abs(out.w2).max() <= grid.hy


def test_h0_invariance(model_compressive_12, rng):
    _, _, metric, gen = model_compressive_12
    mrow = gen.space.mean_row()
    assert np.abs(mrow @ gen.G).max() < 1e-14  # exact at matrix level
    for _ in range(10):
        v = gen.space.random_state(rng)
        phi = gen.space.to_state(gen.G @ v)
        assert abs(mean_functional(phi)) <= 1e-8 * np.linalg.norm(v)


def test_apply_generator_dimension_mismatch(model_zero_12):
    _, _, _, gen = model_zero_12
    with pytest.raises(ValueError, match="reduced vector"):
        apply_generator(gen, np.zeros(3))


def test_b_matrix_structure(model_compressive_12, rng):
    grid, U, _, gen = model_compressive_12
    sp_ = gen.space
    B = gen.B_mat
    # rows outside the (p, w1) slots vanish
    rows = np.split(np.arange(gen.n_dof), [sp_.sl_p.stop, sp_.sl_u2.stop, sp_.sl_w1.stop])
    u_rows = rows[1]
    w2_rows = rows[3]
    assert abs(B[u_rows, :]).max() == 0.0
    assert abs(B[w2_rows, :]).max() == 0.0
    # p-row action is -div_h(U) p
    v = rng.standard_normal(gen.n_dof)
    ops = operators(grid)
    divU = ops.Dx @ U.U1.reshape(-1) + ops.Dy @ U.U2.reshape(-1)
    expect_p = -divU * v[sp_.sl_p]
    assert np.abs((B @ v)[sp_.sl_p] - expect_p).max() < 1e-12
    # w1-row action is U . grad w1
    w1 = v[sp_.sl_w1]
    expect_w1 = U.u_omega[1:-1] * (ops.D1b @ w1)[1:-1]
    assert np.abs((B @ v)[sp_.sl_w1] - expect_w1).max() < 1e-12
    # A + B = G
    assert abs(gen.A_mat + gen.B_mat - gen.G).max() < 1e-12


def test_lu_matrix_acts_on_velocity_only(model_compressive_12, rng):
    grid, U, _, gen = model_compressive_12
    sp_ = gen.space
    LU = gen.LU_mat
    assert abs(LU[sp_.sl_p, :]).max() == 0.0
    assert abs(LU[sp_.sl_w1, :]).max() == 0.0
    assert abs(LU[sp_.sl_w2, :]).max() == 0.0
    # (u . grad U)_i on the reconstructed velocity
    v = rng.standard_normal(gen.n_dof)
    W1 = (sp_.V1 @ v).reshape(grid.shape)
    W2 = (sp_.V2 @ v).reshape(grid.shape)
    expect1 = (U.J[0][0] * W1 + U.J[0][1] * W2)[sp_.u1_mask]
    got1 = (LU @ v)[sp_.sl_u1]
    assert np.abs(got1 - expect1).max() < 1e-12


def test_exact_dissipativity_identity_zero_ambient(model_zero_12, rng):
    # Re((G phi, phi)) = -(sigma, eps) - eta ||u||^2 - stabilization, exactly
    grid, _, metric, gen = model_zero_12
    from fsilab.analysis import _flow_budget
    from fsilab.generator import pressure_stabilization

    stab = pressure_stabilization(grid, gen.params.p_stab)
    ops = operators(grid)
    for _ in range(10):
        v = gen.space.random_state(rng)
        q = np.real(metric.inner(gen.G @ v, v))
        p = v[gen.space.sl_p]
        stab_term = float(p @ (ops.P * (stab @ p)))
        assert abs(q + _flow_budget(gen, v) + stab_term) < 1e-11 * abs(q)


def test_plate_pressure_skew_pairing(model_zero_12, rng):
    # Re[(L2 w2, L2 w1) - (A4 w1, w2)] = 0: the bending pairing is skew
    grid, _, metric, gen = model_zero_12
    ops = operators(grid)
    A4 = clamped_fourth_matrix(grid)
    for _ in range(5):
        w1 = rng.standard_normal(grid.nx)
        w2 = rng.standard_normal(grid.nx)
        lhs = (ops.pbeam * (ops.L2b @ w2) * (ops.L2b @ w1)).sum()
        rhs = grid.hx * (A4 @ w1) @ w2
        assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))


def test_adjoint_identity_and_symmetry(model_compressive_12, rng):
    _, _, metric, gen = model_compressive_12
    adj = numerical_adjoint(gen)
    for _ in range(20):
        x = gen.space.random_state(rng)
        y = gen.space.random_state(rng)
        scale = metric.norm(x) * metric.norm(y)
        assert abs(metric.inner(gen.G @ x, y) - metric.inner(x, adj.matvec(y))) \
            <= 1e-10 * scale
        assert abs(metric.inner(adj.matvec(x), y) - metric.inner(x, gen.G @ y)) \
            <= 1e-10 * scale


def test_adjoint_involution_dense(model_compressive_12):
    _, _, metric, gen = model_compressive_12
    adj = numerical_adjoint(gen)
    Astar = adj.as_matrix()
    Gm = metric.gram()
    Gd = Gm if isinstance(Gm, np.ndarray) else Gm.toarray()
    Astarstar = np.linalg.solve(Gd, Astar.T @ Gd)
    Gdense = gen.G.toarray()
    assert np.abs(Astarstar - Gdense).max() <= 1e-10 * np.abs(Gdense).max()


def test_plate_block_sign_structure_under_adjoint(model_zero_12):
    # at U = 0, in Gram-whitened coordinates the adjoint is the transpose:
    # the symmetric part of the plate block (the interface-trace
    # dissipation) is preserved and negative, the skew part (the
    # bending/velocity exchange) reverses sign
    _, _, metric, gen = model_zero_12
    Gm = metric.gram().toarray()
    L = np.linalg.cholesky(Gm)
    Linv = np.linalg.inv(L.T)
    Ghat = L.T @ gen.G.toarray() @ Linv
    Gstar_hat = L.T @ numerical_adjoint(gen).as_matrix() @ Linv
    sl = slice(gen.space.sl_w1.start, gen.space.sl_w2.stop)
    W, Wstar = Ghat[sl, sl], Gstar_hat[sl, sl]
    scale = np.abs(W).max()
    sym = 0.5 * (W + W.T)
    skew = 0.5 * (W - W.T)
    sym_star = 0.5 * (Wstar + Wstar.T)
    skew_star = 0.5 * (Wstar - Wstar.T)
    assert np.abs(sym_star - sym).max() <= 1e-9 * scale
    assert np.abs(skew_star + skew).max() <= 1e-9 * scale
    # the symmetric part is dissipative and the skew part dominates it
    assert np.linalg.eigvalsh(sym).max() <= 1e-9 * scale
    assert np.abs(skew).max() > np.abs(sym).max()


def test_kernel_vector_zero_ambient(model_zero_16):
    _, _, _, gen = model_zero_16
    zeta, info = kernel_vector(gen)
    assert info["residual"] <= 1e-8
    assert info["mean_over_norm"] >= 0.01
    # u-component vanishes in the physical kernel (p = const, w1 bending)
    sp_ = gen.space
    ucomp = np.linalg.norm(zeta[sp_.sl_u1]) + np.linalg.norm(zeta[sp_.sl_u2])
    assert ucomp < 1e-6 * np.linalg.norm(zeta)


def test_kernel_mean_stability_under_refinement():
    vals = []
    for nx in (12, 16):
        _, _, _, gen = make_model(nx, nx)
        _, info = kernel_vector(gen)
        vals.append(info["mean_over_norm"])
    assert abs(vals[0] - vals[1]) <= 0.2 * max(vals)


def test_h0_restricted_sigma_min_positive(model_zero_12):
    _, _, _, gen = model_zero_12
    assert h0_restricted_sigma_min(gen) > 1e-3


def test_no_kernel_found_raises(model_zero_12):
    _, _, _, gen = model_zero_12
    with pytest.raises(NoKernelFound):
        kernel_vector(gen, tol=1e-30)


# ---------------------------------------------------------------------------
# commutator diagnostics
# ---------------------------------------------------------------------------


def test_commutator_1d_symbolic_oracle():
    x = sympy.symbols("x")
    w, h = x**3, x**2
    lhs = sympy.expand(sympy.diff(h * sympy.diff(w, x), x, 2)
                       - h * sympy.diff(sympy.diff(w, x, 2), x))
    rhs = sympy.expand(sympy.diff(h, x, 2) * sympy.diff(w, x)
                       + 2 * sympy.diff(h, x) * sympy.diff(w, x, 2))
    assert lhs == rhs == 30 * x**2

    xs = np.linspace(0.0, 1.0, 33)
    rep = commutator_check_1d(xs**3, xs**2, xs[1] - xs[0])
    assert rep.discrepancy < 1e-12
    assert np.abs(rep.lhs - 30 * xs[4:-4] ** 2).max() < 1e-10


def test_commutator_1d_constant_transport():
    xs = np.linspace(0.0, 1.0, 33)
    rep = commutator_check_1d(np.sin(2 * xs), np.full_like(xs, 0.7), xs[1] - xs[0])
    assert np.abs(rep.lhs).max() < 1e-10


def test_commutator_2d_composition_matches_expansion():
    xg = np.linspace(0.0, 1.0, 13)
    yg = np.linspace(-1.0, 0.0, 13)
    X, Y = np.meshgrid(xg, yg, indexing="ij")
    rep = commutator_check_2d(X * Y, X, np.zeros_like(X), xg[1] - xg[0], yg[1] - yg[0])
    assert rep.discrepancy < 1e-12
    # the written cross-term variant differs by 2 div(h) d1 d2 w = 2 here
    assert rep.discrepancy_written_variant == pytest.approx(2.0, abs=1e-10)


def test_commutator_2d_quadratic_fields():
    xg = np.linspace(0.0, 1.0, 13)
    yg = np.linspace(-1.0, 0.0, 13)
    X, Y = np.meshgrid(xg, yg, indexing="ij")
    rep = commutator_check_2d(X**2 + X * Y, X + Y, X - Y,
                              xg[1] - xg[0], yg[1] - yg[0])
    assert rep.discrepancy < 1e-11


# ---------------------------------------------------------------------------
# reconstruction / interface traces
# ---------------------------------------------------------------------------


def test_reconstruction_enforces_interface_condition(model_compressive_12, rng):
    grid, U, _, gen = model_compressive_12
    ops = operators(grid)
    v = gen.space.random_state(rng)
    phi = gen.space.to_state(v)
    theta = phi.w2 + U.u_omega * (ops.D1b @ phi.w1[1:-1])
    assert np.abs(phi.u2[:, -1] - theta).max() < 1e-14
    assert np.abs(phi.u1[0, :]).max() == 0.0
    assert np.abs(phi.u2[:, 0]).max() == 0.0


def test_params_validation(model_zero_12):
    grid, U, metric, _ = model_zero_12
    with pytest.raises(ValueError, match="viscosity"):
        Params(nu=0.0, lam=1.0, eta=1.0, U=U, metric=metric)
    with pytest.raises(ValueError, match="drag"):
        Params(nu=1.0, lam=1.0, eta=0.0, U=U, metric=metric)
    other = ambient_preset("compressive", 0.001, grid)
    with pytest.raises(ValueError, match="different ambient"):
        Params(nu=1.0, lam=1.0, eta=1.0, U=other, metric=metric)


def test_uniform_shear_assembly_conserves_mean():
    from tests.conftest import make_model

    grid, U, metric, gen = make_model(12, 12, preset="uniform-shear",
                                      amplitude=1e-3, C1=0.5, C2=4.0)
    assert np.abs(gen.space.mean_row() @ gen.G).max() < 1e-14
    rng_ = np.random.default_rng(0)
    worst = max(
        np.real(metric.inner(gen.G @ v, v)) / np.real(metric.inner(v, v))
        for v in (gen.space.random_state(rng_) for _ in range(30))
    )
    assert worst <= 1e-4


def test_metric_grid_mismatch_rejected(model_zero_12):
    _, U, metric, _ = model_zero_12
    gother = build_grid(10, 10, 1.0, 1.0)
    Uo = ambient_preset("zero", 0.0, gother)
    with pytest.raises(ValueError, match="grid"):
        assemble_generator(
            Params(nu=1.0, lam=1.0, eta=1.0, U=Uo, metric=build_metric(Uo)),
            build_grid(12, 12, 1.0, 1.0),
        )
