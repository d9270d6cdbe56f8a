"""Discrete solvers for the two auxiliary elliptic problems of the metric.

Neumann potential:  -Lap psi = f in O, d(psi)/dn = 0 on S and = chi on
the interface, fixed by the mean-zero gauge int_O psi = 0.  The data
must satisfy the compatibility condition int_O f + int_Omega chi = 0.
The discrete system uses the 5-point Laplacian with centered ghost
elimination of the flux condition, row-scaled by the trapezoid weights
(which makes it symmetric), and is solved through a bordered
augmentation that pins the gauge.

Dirichlet map:  the discrete-harmonic extension of interface data
(zero on the rigid walls) into the flow rectangle, again with the
5-point Laplacian.  The boundary datum must vanish at the interface
endpoints, otherwise the extended boundary datum would be discontinuous.

Both factorizations are computed once per grid and cached; solves
against a cached factorization are read-only and safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid, integrate_2d, integrate_beam, norm_2d, norm_beam, operators


class CompatibilityViolated(ValueError):
    """Neumann data violating int_O f + int_Omega chi = 0."""


@dataclass(frozen=True)
class NeumannData:
    """Volumetric datum f on the flow grid and flux datum chi on the interface."""

    f: np.ndarray
    chi: np.ndarray

    def defect(self, grid: Grid) -> float:
        return abs(integrate_2d(grid, self.f) + integrate_beam(grid, self.chi))

    def is_compatible(self, grid: Grid) -> bool:
        tol = 1e-10 * (norm_2d(grid, self.f) + norm_beam(grid, self.chi) + 1e-300)
        return self.defect(grid) <= max(tol, 1e-14)


class _NeumannSystem:
    """Weight-scaled ghost-eliminated Laplacian, bordered by the gauge row."""

    def __init__(self, grid: Grid):
        self.grid = grid
        mx, my = grid.shape
        hx, hy = grid.hx, grid.hy
        ops = operators(grid)
        N = grid.n_nodes

        rows, cols, vals = [], [], []

        def node(i: int, j: int) -> int:
            return i * my + j

        for i in range(mx):
            for j in range(my):
                k = node(i, j)
                w = ops.px[i] * ops.py[j]
                diag = 0.0
                # x-direction: ghost reflection (zero flux) on the side walls
                if i == 0:
                    diag += 2.0 / hx**2
                    rows.append(k); cols.append(node(1, j)); vals.append(-2.0 * w / hx**2)
                elif i == mx - 1:
                    diag += 2.0 / hx**2
                    rows.append(k); cols.append(node(mx - 2, j)); vals.append(-2.0 * w / hx**2)
                else:
                    diag += 2.0 / hx**2
                    rows.append(k); cols.append(node(i - 1, j)); vals.append(-w / hx**2)
                    rows.append(k); cols.append(node(i + 1, j)); vals.append(-w / hx**2)
                # y-direction: zero flux at the bottom, datum flux at the top
                if j == 0:
                    diag += 2.0 / hy**2
                    rows.append(k); cols.append(node(i, 1)); vals.append(-2.0 * w / hy**2)
                elif j == my - 1:
                    diag += 2.0 / hy**2
                    rows.append(k); cols.append(node(i, my - 2)); vals.append(-2.0 * w / hy**2)
                else:
                    diag += 2.0 / hy**2
                    rows.append(k); cols.append(node(i, j - 1)); vals.append(-w / hy**2)
                    rows.append(k); cols.append(node(i, j + 1)); vals.append(-w / hy**2)
                rows.append(k); cols.append(k); vals.append(diag * w)

        A = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
        g = ops.P  # gauge row = quadrature weights; also spans ker(A)^T
        self.matrix = sp.bmat([[A, g[:, None]], [g[None, :], None]], format="csc")
        self.factor = spla.splu(self.matrix)
        self.top_nodes = np.array([node(i, my - 1) for i in range(mx)])
        self.weights = ops.P

    def rhs(self, f: np.ndarray, chi: np.ndarray) -> np.ndarray:
        grid = self.grid
        ops = operators(grid)
        b = (self.weights * f.reshape(-1)).astype(float, copy=True)
        # flux injection from the eliminated top ghost: +2 chi / hy, weighted
        b[self.top_nodes] += self.weights[self.top_nodes] * 2.0 * np.asarray(chi) / grid.hy
        return np.concatenate([b, [0.0]])

    def solve(self, f: np.ndarray, chi: np.ndarray) -> np.ndarray:
        sol = self.factor.solve(self.rhs(f, chi))
        return sol[:-1].reshape(self.grid.shape)

    def solve_many(self, B: np.ndarray) -> np.ndarray:
        """Solve for a block of pre-assembled bordered right-hand sides."""
        return self.factor.solve(B)


class _DirichletSystem:
    """5-point interior Laplacian with injected boundary values."""

    def __init__(self, grid: Grid):
        self.grid = grid
        mx, my = grid.shape
        hx, hy = grid.hx, grid.hy
        nint = grid.nx * grid.ny

        def ij_to_k(i: int, j: int) -> int:
            return (i - 1) * grid.ny + (j - 1)

        rows, cols, vals = [], [], []
        # boundary coupling: interior node adjacent to the top row sees chi
        top_pairs = []  # (interior eq index, beam node index)
        for i in range(1, mx - 1):
            for j in range(1, my - 1):
                k = ij_to_k(i, j)
                rows.append(k); cols.append(k); vals.append(2.0 / hx**2 + 2.0 / hy**2)
                for di, dj, h2 in ((-1, 0, hx**2), (1, 0, hx**2), (0, -1, hy**2), (0, 1, hy**2)):
                    ii, jj = i + di, j + dj
                    if 1 <= ii <= mx - 2 and 1 <= jj <= my - 2:
                        rows.append(k); cols.append(ij_to_k(ii, jj)); vals.append(-1.0 / h2)
                    elif jj == my - 1:
                        top_pairs.append((k, ii))
        self.matrix = sp.csc_matrix(sp.csr_matrix((vals, (rows, cols)), shape=(nint, nint)))
        self.factor = spla.splu(self.matrix)
        self.top_pairs = top_pairs

    def solve(self, datum: np.ndarray) -> np.ndarray:
        grid = self.grid
        b = np.zeros(grid.nx * grid.ny)
        for k, i in self.top_pairs:
            b[k] += datum[i] / grid.hy**2
        sol = self.factor.solve(b)
        out = np.zeros(grid.shape)
        out[1:-1, 1:-1] = sol.reshape(grid.nx, grid.ny)
        out[:, -1] = datum
        out[0, -1] = out[-1, -1] = 0.0
        return out


class EllipticMaps:
    """Cached factorizations of the two elliptic systems for one grid."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self._neumann = _NeumannSystem(grid)
        self._dirichlet = _DirichletSystem(grid)

    def neumann_potential(self, data: NeumannData, check: bool = True) -> np.ndarray:
        """Mean-zero potential for the mixed-flux problem.

        With check=False the bordered solve projects incompatible data onto
        the solvable range instead of raising; the metric uses that variant,
        which coincides with the true solve whenever the data are compatible.
        """
        f = np.asarray(data.f)
        chi = np.asarray(data.chi)
        if f.shape != self.grid.shape:
            raise ValueError(f"volumetric datum shape {f.shape} != grid {self.grid.shape}")
        if chi.shape != (self.grid.n_beam,):
            raise ValueError(f"flux datum must have {self.grid.n_beam} values")
        if check and not data.is_compatible(self.grid):
            raise CompatibilityViolated(
                f"Neumann data defect {data.defect(self.grid):.3e} exceeds tolerance"
            )
        return self._neumann.solve(f, chi)

    def dirichlet_map(self, datum: np.ndarray) -> np.ndarray:
        """Discrete-harmonic extension of interface data, zero on the walls."""
        datum = np.asarray(datum, dtype=float)
        if datum.shape != (self.grid.n_beam,):
            raise ValueError(f"interface datum must have {self.grid.n_beam} values")
        scale = max(1.0, float(np.max(np.abs(datum))))
        if abs(datum[0]) > 1e-12 * scale or abs(datum[-1]) > 1e-12 * scale:
            raise ValueError("discontinuous datum: interface data must vanish at the endpoints")
        return self._dirichlet.solve(datum)

    # -- dense map assembly for the metric ----------------------------------

    def dirichlet_columns(self, data_matrix: np.ndarray) -> np.ndarray:
        """Extensions of several interface data, one column each."""
        cols = [self._dirichlet.solve(data_matrix[:, k]).reshape(-1)
                for k in range(data_matrix.shape[1])]
        return np.column_stack(cols) if cols else np.zeros((self.grid.n_nodes, 0))

    def neumann_columns(self, F: np.ndarray, Chi: np.ndarray) -> np.ndarray:
        """Potentials for several (f, chi) columns, compatibility-projected."""
        ncols = F.shape[1]
        if ncols == 0:
            return np.zeros((self.grid.n_nodes, 0))
        B = np.zeros((self.grid.n_nodes + 1, ncols))
        for k in range(ncols):
            B[:, k] = self._neumann.rhs(F[:, k].reshape(self.grid.shape), Chi[:, k])
        sol = self._neumann.solve_many(B)
        return sol[:-1, :]


@lru_cache(maxsize=16)
def elliptic_maps(grid: Grid) -> EllipticMaps:
    return EllipticMaps(grid)


def neumann_potential(grid: Grid, data: NeumannData) -> np.ndarray:
    return elliptic_maps(grid).neumann_potential(data)


def dirichlet_map(grid: Grid, datum: np.ndarray) -> np.ndarray:
    return elliptic_maps(grid).dirichlet_map(datum)
