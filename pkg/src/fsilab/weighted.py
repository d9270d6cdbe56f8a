"""The weighted inner product that restores dissipativity.

On the invariant subspace the state space is re-topologized with

    ((phi, phi~)) = (p, p~)_O
                  + (u - alpha D(g . grad w1) e2 + xi grad psi(p, w1),  same~)_O
                  + (L2 w1, L2 w1~)_Omega
                  + (w2 + h_alpha . grad w1 + xi w1,  same~)_Omega

where psi(p, w1) solves the mixed-flux potential problem with volumetric
datum p and interface flux w1 (compatible exactly on the invariant
subspace), D is the harmonic extension of interface data, g is the
affine interface field with endpoint values -1 and +1 (the minimal C2
extension of the endpoint normals), h_alpha = U|_Omega - alpha g, and

    alpha = 2 u_star,      r_u = r(u_star) = u_star + u_star^2 + u_star^3,

    xi = the smaller root of (C1 + C2 r_u) xi^2 + (C2 r_u - 1/2) xi + C2 r_u = 0.

The root is real only when u_star is small enough; otherwise the
construction fails and `AmbientTooLarge` is raised.  At U = 0 all the
extra terms vanish and the product reduces to the standard one.

The Gram matrix of either product on the reduced unknown vector is
available sparsely at U = 0 and densely otherwise; norms and inner
products of individual states are always evaluated matrix-free through
the cached elliptic factorizations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .ambient import AmbientField, r_polynomial, u_star_norm
from .elliptic import EllipticMaps, elliptic_maps
from .grid import Grid, operators
from .state import State, StateSpace, state_space


class AmbientTooLarge(ValueError):
    """The smallness hypothesis fails: the xi radicand is negative."""


def xi_parameter(C1: float, C2: float, r_u: float) -> float:
    """Smaller root of (C1 + C2 r) xi^2 + (C2 r - 1/2) xi + C2 r = 0."""
    if C1 <= 0.0 or C2 <= 0.0:
        raise ValueError(f"configuration constants must be positive, got C1={C1}, C2={C2}")
    if r_u < 0.0:
        raise ValueError(f"r_u must be nonnegative, got {r_u}")
    half_minus = 0.5 - C2 * r_u
    radicand = half_minus**2 - 4.0 * C2 * (C1 + C2 * r_u) * r_u
    if radicand < 0.0:
        raise AmbientTooLarge(
            f"ambient field too large: xi radicand {radicand:.6e} < 0 (r_u={r_u:.6e})"
        )
    return (half_minus - math.sqrt(radicand)) / (2.0 * (C1 + C2 * r_u))


def _solve_linear(solve, b: np.ndarray) -> np.ndarray:
    """Apply a real linear solve to a possibly complex right-hand side."""
    if np.iscomplexobj(b):
        return solve(b.real) + 1j * solve(b.imag)
    return solve(b)


@dataclass
class WeightedMetric:
    """Weighted inner product on the reduced state space.

    Immutable after construction; the lazily built Gram factor is cached
    and shared, concurrent read-only use is safe.
    """

    space: StateSpace
    elliptic: EllipticMaps
    u_star: float
    r_u: float
    xi: float
    alpha: float
    C1: float
    C2: float
    g: np.ndarray  # affine interface field, endpoint values -1, +1
    h_alpha: np.ndarray  # U|_Omega - alpha g
    _gram: Optional[sp.csr_matrix | np.ndarray] = field(default=None, repr=False)
    _chol: Optional[object] = field(default=None, repr=False)

    # -- field-level appliers ------------------------------------------------

    @property
    def grid(self) -> Grid:
        return self.space.grid

    @property
    def is_standard(self) -> bool:
        return self.xi == 0.0 and self.alpha == 0.0

    def _w1_full(self, v: np.ndarray) -> np.ndarray:
        w = np.zeros(self.space.grid.n_beam, dtype=v.dtype)
        w[1:-1] = v[self.space.sl_w1]
        return w

    def z_fields(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Velocity-slot fields of the weighted product (flattened)."""
        sp_ = self.space
        Z1 = sp_.V1 @ v
        Z2 = sp_.V2 @ v
        if self.is_standard:
            return Z1, Z2
        grid = sp_.grid
        ops = operators(grid)
        p = v[sp_.sl_p]
        w1_int = v[sp_.sl_w1]
        w1_full = self._w1_full(v)
        # potential solve with (f, chi) = (p, w1); compatibility-projected
        neu = self.elliptic._neumann

        def psi_solve(p_r: np.ndarray, w_r: np.ndarray) -> np.ndarray:
            return neu.solve(p_r.reshape(grid.shape), w_r).reshape(-1)

        if np.iscomplexobj(v):
            psi = psi_solve(p.real, w1_full.real) + 1j * psi_solve(p.imag, w1_full.imag)
        else:
            psi = psi_solve(p, w1_full)
        datum = self.g * (ops.D1b @ w1_int)
        if np.iscomplexobj(v):
            ext = (self.elliptic._dirichlet.solve(datum.real)
                   + 1j * self.elliptic._dirichlet.solve(datum.imag)).reshape(-1)
        else:
            ext = self.elliptic._dirichlet.solve(datum).reshape(-1)
        Z1 = Z1 + self.xi * (ops.Dx @ psi)
        Z2 = Z2 + self.xi * (ops.Dy @ psi) - self.alpha * ext
        return Z1, Z2

    def y_field(self, v: np.ndarray) -> np.ndarray:
        """Beam-velocity slot w2 + h_alpha . grad w1 + xi w1 on the full beam."""
        sp_ = self.space
        ops = operators(sp_.grid)
        out = np.zeros(sp_.grid.n_beam, dtype=v.dtype)
        out[1:-1] = v[sp_.sl_w2]
        out = out + self.h_alpha * (ops.D1b @ v[sp_.sl_w1]) + self.xi * self._w1_full(v)
        return out

    # -- inner products ------------------------------------------------------

    def inner(self, v: np.ndarray, w: np.ndarray):
        """Weighted inner product of two reduced vectors (conjugate-linear in w)."""
        sp_ = self.space
        ops = operators(sp_.grid)
        P, pb = ops.P, ops.pbeam
        pv, pw = v[sp_.sl_p], w[sp_.sl_p]
        acc = (P * pv * np.conj(pw)).sum()
        Z1v, Z2v = self.z_fields(v)
        Z1w, Z2w = self.z_fields(w)
        acc += (P * (Z1v * np.conj(Z1w) + Z2v * np.conj(Z2w))).sum()
        c_v = ops.L2b @ v[sp_.sl_w1]
        c_w = ops.L2b @ w[sp_.sl_w1]
        acc += (pb * c_v * np.conj(c_w)).sum()
        acc += (pb * self.y_field(v) * np.conj(self.y_field(w))).sum()
        return acc

    def norm(self, v: np.ndarray) -> float:
        return float(np.sqrt(np.real(self.inner(v, v))))

    # -- Gram assembly -------------------------------------------------------

    def gram(self):
        """Gram matrix on the reduced vector: sparse at U = 0, dense otherwise."""
        if self._gram is None:
            if self.is_standard:
                self._gram = standard_gram(self.space)
            else:
                self._gram = self._gram_dense()
        return self._gram

    def _gram_dense(self) -> np.ndarray:
        sp_ = self.space
        grid = sp_.grid
        ops = operators(grid)
        N, n = sp_.N, sp_.n_dof
        P = ops.P

        G = _gram_common(sp_, self.h_alpha, self.xi).toarray()

        # dense velocity-slot corrections from the elliptic maps
        nb = grid.n_beam
        nw = sp_.n_w
        # potential columns for unit pressure dofs and unit w1 dofs
        F = np.zeros((N + 1, N + nw))
        F[:N, :N] = np.diag(P)
        top = self.elliptic._neumann.top_nodes
        for j in range(nw):
            chi = np.zeros(nb)
            chi[j + 1] = 1.0
            F[top, N + j] += P[top] * 2.0 * chi / grid.hy
        psi_cols = self.elliptic._neumann.solve_many(F)[:-1, :]
        # harmonic-extension columns for unit w1 dofs
        ext_data = self.g[:, None] * (ops.D1b @ np.eye(nw))
        ext_cols = self.elliptic.dirichlet_columns(ext_data)

        cols = np.concatenate([np.arange(sp_.sl_p.start, sp_.sl_p.stop),
                               np.arange(sp_.sl_w1.start, sp_.sl_w1.stop)])
        C1x = self.xi * (ops.Dx @ psi_cols)
        C2x = self.xi * (ops.Dy @ psi_cols)
        C2x[:, N:] -= self.alpha * ext_cols

        V1a = sp_.V1.toarray()
        V2a = sp_.V2.toarray()
        Z1 = V1a
        Z2 = V2a
        Z1[:, cols] += C1x
        Z2[:, cols] += C2x
        G += Z1.T @ (P[:, None] * Z1) + Z2.T @ (P[:, None] * Z2)
        return 0.5 * (G + G.T)

    def gram_solve(self, b: np.ndarray) -> np.ndarray:
        """Solve Gram x = b (Cholesky, cached)."""
        if self._chol is None:
            Gm = self.gram()
            if sp.issparse(Gm):
                self._chol = spla.splu(sp.csc_matrix(Gm))
            else:
                self._chol = scipy.linalg.cho_factor(Gm)
        if sp.issparse(self.gram()):
            return _solve_linear(self._chol.solve, b)
        if np.iscomplexobj(b):
            return (scipy.linalg.cho_solve(self._chol, b.real)
                    + 1j * scipy.linalg.cho_solve(self._chol, b.imag))
        return scipy.linalg.cho_solve(self._chol, b)


def _gram_common(space: StateSpace, h_alpha: np.ndarray, xi: float) -> sp.csr_matrix:
    """Pressure, bending, and beam-velocity blocks shared by both Grams."""
    grid = space.grid
    ops = operators(grid)
    n = space.n_dof
    blocks = []
    blocks.append(space.Rp.T @ sp.diags(ops.P) @ space.Rp)
    L2 = ops.L2b @ space.Rw1
    blocks.append(L2.T @ sp.diags(ops.pbeam) @ L2)
    # beam-velocity slot: rows over full beam nodes
    nb = grid.n_beam
    Y = sp.lil_matrix((nb, n))
    for i in range(1, nb - 1):
        Y[i, space.sl_w2.start + (i - 1)] = 1.0
    Y = sp.csr_matrix(Y) + sp.diags(h_alpha) @ (ops.D1b @ space.Rw1)
    if xi != 0.0:
        W1full = sp.lil_matrix((nb, n))
        for i in range(1, nb - 1):
            W1full[i, space.sl_w1.start + (i - 1)] = 1.0
        Y = Y + xi * sp.csr_matrix(W1full)
    blocks.append(Y.T @ sp.diags(ops.pbeam) @ Y)
    out = blocks[0]
    for b in blocks[1:]:
        out = out + b
    return sp.csr_matrix(out)


def standard_gram(space: StateSpace) -> sp.csr_matrix:
    """Gram of the standard product on the reduced vector (always sparse)."""
    ops = operators(space.grid)
    zero_h = np.zeros(space.grid.n_beam)
    G = _gram_common(space, zero_h, 0.0)
    G = G + space.V1.T @ sp.diags(ops.P) @ space.V1
    G = G + space.V2.T @ sp.diags(ops.P) @ space.V2
    return sp.csr_matrix(0.5 * (G + G.T))


def build_metric(
    U: AmbientField,
    C1: float = 1.0,
    C2: float = 1.0,
    grid: Grid | None = None,
    elliptic: EllipticMaps | None = None,
) -> WeightedMetric:
    """Assemble the weighted metric for an ambient field.

    Raises AmbientTooLarge when the xi radicand is negative, i.e. the
    smallness hypothesis on u_star fails for the given constants.
    """
    grid = grid or U.grid
    if grid != U.grid:
        raise ValueError("grid does not match the ambient field's grid")
    elliptic = elliptic or elliptic_maps(grid)
    star = u_star_norm(U)
    r_u = r_polynomial(star)
    xi = xi_parameter(C1, C2, r_u)
    alpha = 2.0 * star
    g = 2.0 * grid.xcoords() / grid.Lx - 1.0
    h_alpha = U.u_omega - alpha * g
    space = state_space(grid, U)
    return WeightedMetric(
        space=space,
        elliptic=elliptic,
        u_star=star,
        r_u=r_u,
        xi=xi,
        alpha=alpha,
        C1=C1,
        C2=C2,
        g=g,
        h_alpha=h_alpha,
    )


# -- State-level convenience wrappers ---------------------------------------


def weighted_inner(phi: State, phit: State, metric: WeightedMetric):
    """Weighted inner product of two states (conjugate-linear in the second)."""
    if phi.grid != metric.grid or phit.grid != metric.grid:
        raise ValueError("state grid does not match the metric's grid")
    v = metric.space.to_reduced(phi)
    w = metric.space.to_reduced(phit)
    return metric.inner(v, w)


def standard_inner(phi: State, phit: State, space: StateSpace):
    """Standard inner product with the space's boundary reconstruction."""
    v = space.to_reduced(phi)
    w = space.to_reduced(phit)
    G = standard_gram(space)
    return np.vdot(w, G @ v)


def norm_equivalence_bounds(
    metric: WeightedMetric, tol: float = 1e-7, maxiter: int = 500, seed: int = 0
) -> tuple[float, float]:
    """Extreme generalized eigenvalues of (weighted Gram, standard Gram).

    Computed on the whole reduced space, which brackets the restriction to
    the invariant subspace by eigenvalue interlacing.  Uses LOBPCG with the
    standard Gram as preconditioner; falls back to a dense pencil solve on
    small problems.
    """
    Gs = standard_gram(metric.space)
    Gw = metric.gram()
    n = metric.space.n_dof
    if metric.is_standard:
        return 1.0, 1.0
    if n <= 900:
        Gwd = Gw if isinstance(Gw, np.ndarray) else Gw.toarray()
        vals = scipy.linalg.eigh(Gwd, Gs.toarray(), eigvals_only=True)
        return float(vals[0]), float(vals[-1])
    rng = np.random.default_rng(seed)
    lu = spla.splu(sp.csc_matrix(Gs))
    M = spla.LinearOperator((n, n), matvec=lu.solve)
    A = spla.aslinearoperator(Gw)
    res = []
    for largest in (False, True):
        X = rng.standard_normal((n, 3))
        vals, _ = spla.lobpcg(A, X, B=Gs, M=M, largest=largest, tol=tol,
                              maxiter=maxiter, verbosityLevel=0)
        res.append(float(vals.max() if largest else vals.min()))
    return res[0], res[1]
