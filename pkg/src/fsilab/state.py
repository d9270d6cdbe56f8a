"""State quadruple, the reduced unknown vector, and the mean constraint.

A state is phi = (p, u, w1, w2): pressure and velocity on the flow grid,
beam displacement and beam velocity on the interface.  The boundary
conditions are imposed strongly, so the reduced unknown vector keeps

    p   at every node,
    u1  everywhere except the left/right edges (u.n = 0 there),
    u2  everywhere except the bottom row (u.n = 0) and the top row,
    w1, w2 at interior beam nodes (clamped ends).

The top-row u2 values are slaved to the interface condition
u2|_Omega = w2 + U.grad w1 and are reconstructed, never stored.  Corner
nodes carry zero velocity (the clamped beam datum vanishes there, so the
tags and the interface condition agree).

The invariant subspace is the kernel of the mean functional
m(phi) = int_O p + int_Omega w1; `project_h0` shifts the pressure by a
constant to land on it, which is linear, idempotent, and the identity on
the subspace.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .ambient import AmbientField
from .grid import Grid, integrate_2d, integrate_beam, operators


@dataclass
class State:
    """Full-field state; arrays may be real or complex."""

    grid: Grid
    p: np.ndarray  # (nx+2, ny+2)
    u1: np.ndarray  # (nx+2, ny+2)
    u2: np.ndarray  # (nx+2, ny+2)
    w1: np.ndarray  # (nx+2,)
    w2: np.ndarray  # (nx+2,)

    @classmethod
    def zeros(cls, grid: Grid, dtype=float) -> "State":
        return cls(
            grid=grid,
            p=np.zeros(grid.shape, dtype=dtype),
            u1=np.zeros(grid.shape, dtype=dtype),
            u2=np.zeros(grid.shape, dtype=dtype),
            w1=np.zeros(grid.n_beam, dtype=dtype),
            w2=np.zeros(grid.n_beam, dtype=dtype),
        )

    def copy(self) -> "State":
        return State(self.grid, self.p.copy(), self.u1.copy(), self.u2.copy(),
                     self.w1.copy(), self.w2.copy())


def mean_functional(phi: State) -> float | complex:
    """Trapezoid quadrature of int_O p + int_Omega w1."""
    val = integrate_2d(phi.grid, phi.p) + integrate_beam(phi.grid, phi.w1)
    return complex(val) if np.iscomplexobj(phi.p) else float(val)


def project_h0(phi: State) -> State:
    """Shift the pressure by a constant so the mean functional vanishes."""
    out = phi.copy()
    out.p = out.p - mean_functional(phi) / phi.grid.area
    return out


class StateSpace:
    """Index bookkeeping and reconstruction for the reduced unknown vector.

    The reconstruction matrices V1, V2 map the reduced vector to the full
    u1/u2 nodal fields, with the interface slaving baked into V2; they are
    what both the generator assembly and the metric quadrature use, so the
    two always agree about boundary values.
    """

    def __init__(self, grid: Grid, ambient: AmbientField):
        if ambient.grid != grid:
            raise ValueError("ambient field was built on a different grid")
        self.grid = grid
        self.ambient = ambient
        mx, my = grid.shape
        self.N = grid.n_nodes
        nativeshape = grid.shape

        u1_mask = np.ones(nativeshape, dtype=bool)
        u1_mask[0, :] = False
        u1_mask[-1, :] = False
        u2_mask = np.ones(nativeshape, dtype=bool)
        u2_mask[:, 0] = False
        u2_mask[:, -1] = False
        self.u1_mask = u1_mask
        self.u2_mask = u2_mask
        self.n_u1 = int(u1_mask.sum())
        self.n_u2 = int(u2_mask.sum())
        self.n_w = grid.nx
        self.n_dof = self.N + self.n_u1 + self.n_u2 + 2 * self.n_w

        # slice offsets into the reduced vector
        o = 0
        self.sl_p = slice(o, o + self.N); o += self.N
        self.sl_u1 = slice(o, o + self.n_u1); o += self.n_u1
        self.sl_u2 = slice(o, o + self.n_u2); o += self.n_u2
        self.sl_w1 = slice(o, o + self.n_w); o += self.n_w
        self.sl_w2 = slice(o, o + self.n_w); o += self.n_w

        self._build_reconstruction()

    # -- reduced vector <-> State ------------------------------------------

    def _build_reconstruction(self) -> None:
        grid = self.grid
        N, n = self.N, self.n_dof
        mx, my = grid.shape

        def injection(mask: np.ndarray, sl: slice) -> sp.csr_matrix:
            idx = np.flatnonzero(mask.reshape(-1))
            cols = np.arange(sl.start, sl.stop)
            data = np.ones(idx.size)
            return sp.csr_matrix((data, (idx, cols)), shape=(N, n))

        self.V1 = injection(self.u1_mask, self.sl_u1)

        V2 = injection(self.u2_mask, self.sl_u2).tolil()
        # slave the open top edge: u2 = w2 + U|_Omega * w1'
        ops = operators(grid)
        D1b = ops.D1b  # (nx+2) x nx
        uom = self.ambient.u_omega
        top_flat = [i * my + (my - 1) for i in range(1, mx - 1)]
        for k, node in enumerate(top_flat):
            beam_row = k + 1  # beam node index for interior node i=k+1
            V2[node, self.sl_w2.start + k] = 1.0
            row = D1b.getrow(beam_row)
            for col, val in zip(row.indices, row.data):
                V2[node, self.sl_w1.start + col] += uom[beam_row] * val
        self.V2 = sp.csr_matrix(V2)

        self.Rp = injection(np.ones(grid.shape, dtype=bool), self.sl_p)
        eye = sp.eye(n, format="csr")
        self.Rw1 = sp.csr_matrix(eye[self.sl_w1])
        self.Rw2 = sp.csr_matrix(eye[self.sl_w2])

    def to_reduced(self, phi: State) -> np.ndarray:
        """Pack a State into the reduced vector (eliminated slots dropped)."""
        if phi.grid != self.grid:
            raise ValueError("state grid does not match space grid")
        dtype = complex if any(np.iscomplexobj(a) for a in (phi.p, phi.u1, phi.u2, phi.w1, phi.w2)) else float
        v = np.zeros(self.n_dof, dtype=dtype)
        v[self.sl_p] = phi.p.reshape(-1)
        v[self.sl_u1] = phi.u1[self.u1_mask]
        v[self.sl_u2] = phi.u2[self.u2_mask]
        v[self.sl_w1] = phi.w1[1:-1]
        v[self.sl_w2] = phi.w2[1:-1]
        return v

    def to_state(self, v: np.ndarray) -> State:
        """Unpack a reduced vector, reconstructing the eliminated slots."""
        v = np.asarray(v)
        if v.shape != (self.n_dof,):
            raise ValueError(f"reduced vector must have {self.n_dof} entries, got {v.shape}")
        phi = State.zeros(self.grid, dtype=v.dtype)
        phi.p = v[self.sl_p].reshape(self.grid.shape).copy()
        phi.u1 = (self.V1 @ v).reshape(self.grid.shape)
        phi.u2 = (self.V2 @ v).reshape(self.grid.shape)
        phi.w1[1:-1] = v[self.sl_w1]
        phi.w2[1:-1] = v[self.sl_w2]
        return phi

    # -- mean constraint in reduced coordinates ----------------------------

    def mean_row(self) -> np.ndarray:
        """Row vector m with m @ v = mean_functional(state(v))."""
        ops = operators(self.grid)
        m = np.zeros(self.n_dof)
        m[self.sl_p] = ops.P
        m[self.sl_w1] = ops.pbeam[1:-1]
        return m

    def project_h0_vec(self, v: np.ndarray) -> np.ndarray:
        m = self.mean_row()
        out = np.array(v, copy=True)
        out[self.sl_p] -= (m @ v) / self.grid.area
        return out

    def random_state(self, rng: np.random.Generator, smooth: bool = True) -> np.ndarray:
        """Pseudorandom reduced vector: nodal noise, one Jacobi smoothing
        pass per component, then the pressure-mean projection."""
        grid = self.grid

        def smooth2d(f: np.ndarray) -> np.ndarray:
            if not smooth:
                return f
            g = f.copy()
            g[1:-1, 1:-1] = 0.5 * f[1:-1, 1:-1] + 0.125 * (
                f[:-2, 1:-1] + f[2:, 1:-1] + f[1:-1, :-2] + f[1:-1, 2:]
            )
            return g

        def smooth1d(w: np.ndarray) -> np.ndarray:
            if not smooth:
                return w
            g = w.copy()
            g[1:-1] = 0.5 * w[1:-1] + 0.25 * (w[:-2] + w[2:])
            return g

        phi = State.zeros(grid)
        phi.p = smooth2d(rng.standard_normal(grid.shape))
        u1 = smooth2d(rng.standard_normal(grid.shape))
        u2 = smooth2d(rng.standard_normal(grid.shape))
        u1[~self.u1_mask] = 0.0
        u2[~self.u2_mask] = 0.0
        phi.u1, phi.u2 = u1, u2
        w1 = smooth1d(rng.standard_normal(grid.n_beam))
        w2 = smooth1d(rng.standard_normal(grid.n_beam))
        w1[0] = w1[-1] = 0.0
        w2[0] = w2[-1] = 0.0
        phi.w1, phi.w2 = w1, w2
        return self.project_h0_vec(self.to_reduced(phi))


@lru_cache(maxsize=16)
def _space_cached(grid: Grid, preset: str, amplitude: float) -> StateSpace:
    from .ambient import ambient_preset

    return StateSpace(grid, ambient_preset(preset, amplitude, grid))


def state_space(grid: Grid, ambient: AmbientField) -> StateSpace:
    """Cached StateSpace for (grid, preset, amplitude)."""
    return _space_cached(grid, ambient.preset, ambient.amplitude)
