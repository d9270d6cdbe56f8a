"""Model geometry and the discrete differential operators built on it.

The flow domain is the rectangle O = [0, Lx] x [-Ly, 0]. Its top edge
Omega = [0, Lx] x {0} carries a clamped Euler-Bernoulli beam; the three
remaining edges form the rigid wall S. Corner nodes are tagged S, so
interface data live on the open top edge only.

Fields are collocated on the tensor grid of (nx+2) x (ny+2) nodes,
x_i = i*hx, y_j = -Ly + j*hy, with hx = Lx/(nx+1), hy = Ly/(ny+1).
First derivatives are summation-by-parts (SBP) pairs: with the trapezoid
quadrature P and the difference operator D = P^{-1} Q, the matrix Q
satisfies Q + Q^T = B = diag(-1, 0, ..., 0, 1), so

    (f, D g)_P + (D f, g)_P = boundary quadrature of f*g*n

holds to rounding for every discrete field.  The boundary closure of D
is the first-order two-point stencil; this is the price of an exact
discrete integration-by-parts identity with a diagonal (trapezoid) norm,
and the interior stencils stay second-order centered.

Beam fields are arrays of nx+2 nodal values on the top edge.  Clamped
fields vanish at both endpoints and their discrete slope closure is
built into the clamped operators below.  Two fourth-derivative variants
are provided: `beam_fourth_derivative` uses a one-sided quartic ghost
closure (pointwise exact on clamped-compatible quartics), while the
mimetic pair (`clamped_curvature`, `clamped_fourth_matrix`) satisfies
the exact energy identity

    (A4 w, v)_beam = (L2 w, L2 v)_beam'

needed by the generator's dissipativity structure.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

# Boundary tags
INTERIOR = 0
OMEGA = 1
S_WALL = 2

MIN_NODES = 8


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on [0, Lx] x [-Ly, 0] with nx x ny interior nodes."""

    nx: int
    ny: int
    Lx: float
    Ly: float

    @property
    def hx(self) -> float:
        return self.Lx / (self.nx + 1)

    @property
    def hy(self) -> float:
        return self.Ly / (self.ny + 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx + 2, self.ny + 2)

    @property
    def n_nodes(self) -> int:
        return (self.nx + 2) * (self.ny + 2)

    @property
    def n_beam(self) -> int:
        return self.nx + 2

    @property
    def area(self) -> float:
        return self.Lx * self.Ly

    def xcoords(self) -> np.ndarray:
        return np.linspace(0.0, self.Lx, self.nx + 2)

    def ycoords(self) -> np.ndarray:
        return np.linspace(-self.Ly, 0.0, self.ny + 2)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodal coordinate arrays X, Y of shape (nx+2, ny+2)."""
        return np.meshgrid(self.xcoords(), self.ycoords(), indexing="ij")


def build_grid(nx: int, ny: int, Lx: float = 1.0, Ly: float = 1.0) -> Grid:
    """Validated grid constructor."""
    if nx < MIN_NODES or ny < MIN_NODES:
        raise ValueError(f"grid too small: need nx, ny >= {MIN_NODES}, got ({nx}, {ny})")
    if not (Lx > 0.0 and Ly > 0.0):
        raise ValueError(f"domain extents must be positive, got Lx={Lx}, Ly={Ly}")
    return Grid(int(nx), int(ny), float(Lx), float(Ly))


def boundary_tags(grid: Grid) -> np.ndarray:
    """Tag array of shape (nx+2, ny+2): INTERIOR, OMEGA (open top edge), S_WALL."""
    tags = np.full(grid.shape, INTERIOR, dtype=np.int8)
    tags[0, :] = S_WALL
    tags[-1, :] = S_WALL
    tags[:, 0] = S_WALL
    tags[1:-1, -1] = OMEGA
    # corners of the top row belong to S
    tags[0, -1] = S_WALL
    tags[-1, -1] = S_WALL
    return tags


# ---------------------------------------------------------------------------
# SBP building blocks (cached per grid signature)
# ---------------------------------------------------------------------------


def _sbp_1d(m: int, h: float) -> tuple[np.ndarray, sp.csr_matrix]:
    """Trapezoid weights p (length m) and SBP derivative D = P^-1 Q."""
    p = np.full(m, h)
    p[0] = p[-1] = 0.5 * h
    rows, cols, vals = [], [], []
    for i in range(1, m - 1):
        rows += [i, i]
        cols += [i - 1, i + 1]
        vals += [-0.5, 0.5]
    rows += [0, 0, m - 1, m - 1]
    cols += [0, 1, m - 2, m - 1]
    vals += [-0.5, 0.5, -0.5, 0.5]
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(m, m))
    D = sp.diags(1.0 / p) @ Q
    return p, sp.csr_matrix(D)


class _Operators:
    """Per-grid operator bundle; fields are flattened C-order (x-major)."""

    def __init__(self, grid: Grid):
        mx, my = grid.shape
        px, Dx1 = _sbp_1d(mx, grid.hx)
        py, Dy1 = _sbp_1d(my, grid.hy)
        self.px, self.py = px, py
        self.Dx = sp.csr_matrix(sp.kron(Dx1, sp.eye(my)))
        self.Dy = sp.csr_matrix(sp.kron(sp.eye(mx), Dy1))
        self.P = np.kron(px, py)  # diagonal 2-D quadrature weights
        self.pbeam = px.copy()  # beam trapezoid (same x nodes)

        # clamped beam operators mapping interior dofs (nx) -> full beam (nx+2)
        n, h = grid.nx, grid.hx
        # first derivative, centered with zero-slope closure at the ends
        rows, cols, vals = [], [], []
        for i in range(1, n + 1):
            if i - 1 >= 1:
                rows.append(i)
                cols.append(i - 2)
                vals.append(-0.5 / h)
            if i + 1 <= n:
                rows.append(i)
                cols.append(i)
                vals.append(0.5 / h)
        self.D1b = sp.csr_matrix((vals, (rows, cols)), shape=(n + 2, n))

        # mimetic curvature L2: 3-point second difference, endpoint rows
        # 2*w_1/h^2 and 2*w_n/h^2 (reflection ghost consistent with w'=0)
        rows, cols, vals = [], [], []
        rows += [0]
        cols += [0]
        vals += [2.0 / h**2]
        for i in range(1, n + 1):
            rows.append(i)
            cols.append(i - 1)
            vals.append(-2.0 / h**2)
            if i - 2 >= 0:
                rows.append(i)
                cols.append(i - 2)
                vals.append(1.0 / h**2)
            if i <= n - 1:
                rows.append(i)
                cols.append(i)
                vals.append(1.0 / h**2)
        rows += [n + 1]
        cols += [n - 1]
        vals += [2.0 / h**2]
        self.L2b = sp.csr_matrix((vals, (rows, cols)), shape=(n + 2, n))

        # mimetic clamped fourth-difference: A4 = L2^T diag(pbeam/h) L2 so that
        # h * (A4 w, v) = (L2 w, L2 v)_pbeam exactly
        W = sp.diags(self.pbeam / h)
        self.A4 = sp.csr_matrix(self.L2b.T @ W @ self.L2b)


@lru_cache(maxsize=32)
def _ops_cached(nx: int, ny: int, Lx: float, Ly: float) -> _Operators:
    return _Operators(Grid(nx, ny, Lx, Ly))


def operators(grid: Grid) -> _Operators:
    return _ops_cached(grid.nx, grid.ny, grid.Lx, grid.Ly)


def _flat(f: np.ndarray, grid: Grid) -> np.ndarray:
    f = np.asarray(f)
    if f.shape != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    return f.reshape(-1)


# ---------------------------------------------------------------------------
# Flow-field operators
# ---------------------------------------------------------------------------


def gradient(grid: Grid, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """SBP gradient of a scalar field; components on the full grid."""
    ops = operators(grid)
    v = _flat(p, grid)
    return (ops.Dx @ v).reshape(grid.shape), (ops.Dy @ v).reshape(grid.shape)


def divergence(grid: Grid, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """SBP divergence, the adjoint stencil pairing of `gradient`."""
    ops = operators(grid)
    return (ops.Dx @ _flat(u1, grid) + ops.Dy @ _flat(u2, grid)).reshape(grid.shape)


def stress(
    grid: Grid, u1: np.ndarray, u2: np.ndarray, nu: float, lam: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stress tensor sigma(u) = 2 nu eps(u) + lam tr(eps) I; returns (s11, s12, s22)."""
    if nu <= 0.0:
        raise ValueError(f"viscosity must be positive, got nu={nu}")
    if lam < 0.0:
        raise ValueError(f"dilatational coefficient must be nonnegative, got lam={lam}")
    d1u1, d2u1 = gradient(grid, u1)
    d1u2, d2u2 = gradient(grid, u2)
    e11, e22 = d1u1, d2u2
    e12 = 0.5 * (d2u1 + d1u2)
    tr = e11 + e22
    return 2.0 * nu * e11 + lam * tr, 2.0 * nu * e12, 2.0 * nu * e22 + lam * tr


def stress_divergence(
    grid: Grid, u1: np.ndarray, u2: np.ndarray, nu: float, lam: float
) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise divergence of sigma(u); exact on quadratic velocity fields on
    interior nodes with a two-node margin from the boundary."""
    s11, s12, s22 = stress(grid, u1, u2, nu, lam)
    ops = operators(grid)
    r1 = ops.Dx @ _flat(s11, grid) + ops.Dy @ _flat(s12, grid)
    r2 = ops.Dx @ _flat(s12, grid) + ops.Dy @ _flat(s22, grid)
    return r1.reshape(grid.shape), r2.reshape(grid.shape)


# ---------------------------------------------------------------------------
# Interface traces
# ---------------------------------------------------------------------------


def trace_interface(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Restriction of a full-grid field to the interface row y = 0."""
    f = np.asarray(f)
    if f.shape != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    return f[:, -1].copy()


def trace_normal_derivative(grid: Grid, f: np.ndarray) -> np.ndarray:
    """One-sided second-order normal derivative on the interface row.

    Outward normal is +e2, so this is d/dy at y = 0 from inside the domain.
    Exact for fields quadratic in y.
    """
    f = np.asarray(f)
    if f.shape != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    h = grid.hy
    return (3.0 * f[:, -1] - 4.0 * f[:, -2] + f[:, -3]) / (2.0 * h)


# ---------------------------------------------------------------------------
# Beam operators
# ---------------------------------------------------------------------------


def _check_clamped_values(grid: Grid, w: np.ndarray) -> np.ndarray:
    w = np.asarray(w)
    if w.shape != (grid.n_beam,):
        raise ValueError(f"beam field must have {grid.n_beam} values, got {w.shape}")
    scale = max(1.0, float(np.max(np.abs(w))))
    if abs(w[0]) > 1e-12 * scale or abs(w[-1]) > 1e-12 * scale:
        raise ValueError(
            f"beam field violates clamped endpoint values: w[0]={w[0]!r}, w[-1]={w[-1]!r}"
        )
    return w


def beam_fourth_derivative(grid: Grid, w: np.ndarray, validate: bool = True) -> np.ndarray:
    """Fourth derivative of a clamped beam field.

    Interior nodes use the 5-point stencil (exact up to degree 5).  The
    ghost value next to each clamped end is the quartic consistent with
    w = w' = 0 there and the three adjacent nodal values, which keeps the
    near-end rows exact on clamped-compatible quartics.  Endpoint entries
    of the result are zero (the clamped rows carry no equation).
    """
    if validate:
        w = _check_clamped_values(grid, w)
    else:
        w = np.asarray(w, dtype=float)
    n = grid.nx
    h = grid.hx
    out = np.zeros_like(w, dtype=float)
    wi = w
    # ghosts from the quartic fit through (0, 0, w1, w2, w3) with zero slope
    ghost_l = 6.0 * wi[1] - 2.0 * wi[2] + wi[3] / 3.0
    ghost_r = 6.0 * wi[n] - 2.0 * wi[n - 1] + wi[n - 2] / 3.0
    ext = np.concatenate(([ghost_l], wi, [ghost_r]))
    # ext index i+1 corresponds to node i
    for i in range(1, n + 1):
        out[i] = (ext[i - 1] - 4.0 * ext[i] + 6.0 * ext[i + 1] - 4.0 * ext[i + 2] + ext[i + 3]) / h**4
    return out


def clamped_first_derivative(grid: Grid, w: np.ndarray) -> np.ndarray:
    """Centered first derivative of a clamped beam field; zero at the ends."""
    w = _check_clamped_values(grid, w)
    ops = operators(grid)
    return ops.D1b @ w[1:-1]


def clamped_curvature(grid: Grid, w: np.ndarray) -> np.ndarray:
    """Mimetic second derivative (L2) of a clamped beam field.

    Endpoint rows are 2*w[1]/h^2 and 2*w[n]/h^2; with the beam trapezoid
    quadrature this makes (A4 w, v) = (L2 w, L2 v) an exact identity.
    """
    w = _check_clamped_values(grid, w)
    ops = operators(grid)
    return ops.L2b @ w[1:-1]


def clamped_fourth_matrix(grid: Grid) -> sp.csr_matrix:
    """Mimetic clamped fourth-difference on interior beam dofs (SPD)."""
    return operators(grid).A4


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


def quad_weights_2d(grid: Grid) -> np.ndarray:
    """Flattened trapezoid weights over the full grid."""
    return operators(grid).P


def quad_weights_beam(grid: Grid) -> np.ndarray:
    """Trapezoid weights over the full beam."""
    return operators(grid).pbeam


def integrate_2d(grid: Grid, f: np.ndarray) -> float | complex:
    return (operators(grid).P * _flat(f, grid)).sum()


def integrate_beam(grid: Grid, w: np.ndarray) -> float | complex:
    w = np.asarray(w)
    if w.shape != (grid.n_beam,):
        raise ValueError(f"beam field must have {grid.n_beam} values, got {w.shape}")
    return (operators(grid).pbeam * w).sum()


def inner_2d(grid: Grid, f: np.ndarray, g: np.ndarray):
    """Quadrature inner product (f, g)_P, conjugate-linear in g."""
    return (operators(grid).P * _flat(f, grid) * np.conj(_flat(g, grid))).sum()


def inner_beam(grid: Grid, w: np.ndarray, v: np.ndarray):
    return (operators(grid).pbeam * np.asarray(w) * np.conj(np.asarray(v))).sum()


def norm_2d(grid: Grid, f: np.ndarray) -> float:
    return float(np.sqrt(np.real(inner_2d(grid, f, f))))


def norm_beam(grid: Grid, w: np.ndarray) -> float:
    return float(np.sqrt(np.real(inner_beam(grid, w, w))))
