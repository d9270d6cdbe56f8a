"""Numerical experiments on the assembled generator.

Four families of experiments, matching the two stability statements:

* dissipativity scans: the numerical range Re((G phi, phi)) / |||phi|||^2
  sampled over pseudorandom states in the invariant subspace, together
  with the flow and pressure/plate budgets the analytic estimate spends;

* resolvent solves of the static shifted system ((a+ib) I - G) phi = phi*,
  recording |||phi||| and the pointwise-criterion value sqrt(a) |||phi|||,
  plus sweeps of the criterion across a descending ladder of a;

* implicit evolution by backward differencing, which reuses the shifted
  solver at a = 1/dt and records the weighted/standard energies and the
  mean-functional drift;

* leading (rightmost) spectrum diagnostics.

All shifted solves go through a bordered system that carries the mean
constraint as an extra row (with the constant-pressure direction as the
matching column), so the invariant-subspace membership of solutions is
pinned to solver roundoff instead of drifting by residual/a.  Reported
residuals are normwise backward errors,

    ||(zI - G) phi - phi*|| / (||phi*|| + (|z| + ||G||_inf) ||phi||).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .generator import GeneratorMatrices
from .grid import operators
from .state import State
from .weighted import WeightedMetric

RESIDUAL_TOL = 1e-8


class SolveFailed(RuntimeError):
    """A shifted solve did not reach the residual contract."""


@dataclass(frozen=True)
class ResolventRecord:
    a: float
    b: float
    sample_id: int
    residual: float
    norm_weighted: float
    criterion_value: float
    failed: bool = False


@dataclass
class EnergyTrace:
    times: np.ndarray
    E_weighted: np.ndarray
    E_standard: np.ndarray
    mean_drift: np.ndarray


@dataclass
class DissipativityReport:
    r_u: float
    xi: float
    delta: float
    sample_ids: np.ndarray
    q_over_norm2: np.ndarray
    flow_budget: np.ndarray
    pressure_plate_budget: np.ndarray
    max_q_over_norm2: float
    measured_constant: float


def _max_workers() -> int:
    env = os.environ.get("FSILAB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# Bordered shifted solver
# ---------------------------------------------------------------------------


class ShiftedSolver:
    """LU factorization of the mean-constrained system ((z I - G), kappa; m, 0)."""

    def __init__(self, gen: GeneratorMatrices, z: complex):
        self.gen = gen
        zc = complex(z)
        self.is_complex = zc.imag != 0.0
        self.z = zc if self.is_complex else zc.real
        n = gen.n_dof
        space = gen.space
        m = space.mean_row()
        kappa = np.zeros(n)
        kappa[space.sl_p] = 1.0 / space.grid.area  # mean(kappa) = 1
        A = self.z * sp.eye(n, dtype=complex if self.is_complex else float) - gen.G
        M = sp.csc_matrix(sp.bmat([[A, kappa[:, None]], [m[None, :], None]]))
        try:
            self.factor = spla.splu(M)
        except RuntimeError as exc:  # singular shift
            raise SolveFailed(f"factorization failed at shift {z}: {exc}") from exc
        self.norm_est = float(np.abs(gen.G).sum(axis=1).max())

    def solve(self, rhs: np.ndarray) -> tuple[np.ndarray, float]:
        """Solve for one right-hand side; returns (phi, backward error)."""
        n = self.gen.n_dof
        b = np.concatenate([rhs, [0.0]])
        if self.is_complex:
            phi = self.factor.solve(b.astype(complex))[:n]
        elif np.iscomplexobj(b):
            phi = (self.factor.solve(b.real) + 1j * self.factor.solve(b.imag))[:n]
        else:
            phi = self.factor.solve(b)[:n]
        res = self.z * phi - self.gen.G @ phi - rhs
        denom = np.linalg.norm(rhs) + (abs(self.z) + self.norm_est) * np.linalg.norm(phi)
        backward = float(np.linalg.norm(res) / denom) if denom > 0 else 0.0
        return phi, backward


def resolvent_solve(
    gen: GeneratorMatrices,
    metric: WeightedMetric,
    a: float,
    b: float,
    phi_star: State | np.ndarray,
    sample_id: int = 0,
    solver: Optional[ShiftedSolver] = None,
):
    """Solve ((a+ib) I - G) phi = phi* on the constrained unknowns.

    Returns (phi, record) with phi of the same kind as phi_star.
    """
    if a <= 0.0:
        raise ValueError(f"shift must have positive real part, got a={a}")
    as_state = isinstance(phi_star, State)
    rhs = metric.space.to_reduced(phi_star) if as_state else np.asarray(phi_star)
    z = a + 1j * b if b != 0.0 else float(a)
    solver = solver or ShiftedSolver(gen, z)
    phi, backward = solver.solve(rhs)
    if backward > RESIDUAL_TOL:
        raise SolveFailed(f"backward error {backward:.3e} exceeds {RESIDUAL_TOL:.1e} at a={a}, b={b}")
    nw = metric.norm(phi)
    record = ResolventRecord(
        a=float(a), b=float(b), sample_id=sample_id, residual=backward,
        norm_weighted=nw, criterion_value=float(np.sqrt(a) * nw),
    )
    return (metric.space.to_state(phi) if as_state else phi), record


def resolvent_sweep(
    gen: GeneratorMatrices,
    metric: WeightedMetric,
    b_list: Sequence[float],
    a_list: Sequence[float],
    phi_star_samples: np.ndarray,
) -> list[ResolventRecord]:
    """Criterion table over all (b, a, sample) cells.

    a_list must be strictly decreasing and positive.  Cells that fail keep
    their slot with failed=True / NaN payload so the table stays rectangular.
    Cells are independent and run on a thread pool capped by FSILAB_THREADS.
    """
    a_arr = np.asarray(a_list, dtype=float)
    if np.any(a_arr <= 0.0) or np.any(np.diff(a_arr) >= 0.0):
        raise ValueError("a_list must be strictly decreasing and positive")
    samples = np.atleast_2d(np.asarray(phi_star_samples))
    nb, na, ns = len(b_list), len(a_arr), samples.shape[0]
    records: list[Optional[ResolventRecord]] = [None] * (nb * na * ns)

    def run_cell(ib: int, ia: int) -> None:
        bval, aval = float(b_list[ib]), float(a_arr[ia])
        base = (ib * na + ia) * ns
        try:
            solver = ShiftedSolver(gen, aval + 1j * bval if bval != 0.0 else aval)
            for k in range(ns):
                _, rec = resolvent_solve(
                    gen, metric, aval, bval, samples[k], sample_id=k, solver=solver
                )
                records[base + k] = rec
        except SolveFailed:
            for k in range(ns):
                records[base + k] = ResolventRecord(
                    a=aval, b=bval, sample_id=k, residual=float("nan"),
                    norm_weighted=float("nan"), criterion_value=float("nan"), failed=True,
                )

    cells = [(ib, ia) for ib in range(nb) for ia in range(na)]
    workers = min(_max_workers(), len(cells)) or 1
    if workers == 1:
        for ib, ia in cells:
            run_cell(ib, ia)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda c: run_cell(*c), cells))
    return [r for r in records if r is not None]


def criterion_decay_ratios(records: list[ResolventRecord]) -> dict[tuple[float, int], float]:
    """criterion_value at the smallest a over its value at the largest a,
    per (b, sample)."""
    by_key: dict[tuple[float, int], dict[float, float]] = {}
    for r in records:
        if r.failed:
            continue
        by_key.setdefault((r.b, r.sample_id), {})[r.a] = r.criterion_value
    out = {}
    for key, table in by_key.items():
        a_sorted = sorted(table)
        first, last = table[a_sorted[-1]], table[a_sorted[0]]
        out[key] = last / first if first > 0 else float("nan")
    return out


def w2_trace_bound(
    metric: WeightedMetric,
    pairs: Sequence[tuple[np.ndarray, np.ndarray]],
) -> dict:
    """max ||w2||_Omega / sqrt(|Re((phi*, phi))|) over resolvent pairs."""
    ops = operators(metric.grid)
    ratios = []
    for rhs, phi in pairs:
        w2 = np.zeros(metric.grid.n_beam, dtype=phi.dtype)
        w2[1:-1] = phi[metric.space.sl_w2]
        num = float(np.sqrt(np.real((ops.pbeam * w2 * np.conj(w2)).sum())))
        den = float(np.sqrt(abs(np.real(metric.inner(rhs, phi)))))
        ratios.append(num / den if den > 0 else 0.0)
    return {"max_ratio": max(ratios) if ratios else 0.0, "ratios": ratios}


# ---------------------------------------------------------------------------
# Dissipativity scan
# ---------------------------------------------------------------------------


def _flow_budget(gen: GeneratorMatrices, v: np.ndarray) -> float:
    """(sigma(u), eps(u)) + ||u||^2 of the reconstructed velocity."""
    space = gen.space
    ops = operators(space.grid)
    nu, lam = gen.params.nu, gen.params.lam
    W1 = space.V1 @ v
    W2 = space.V2 @ v
    e11 = ops.Dx @ W1
    e22 = ops.Dy @ W2
    e12 = 0.5 * (ops.Dy @ W1 + ops.Dx @ W2)
    s11 = (2.0 * nu + lam) * e11 + lam * e22
    s22 = lam * e11 + (2.0 * nu + lam) * e22
    s12 = 2.0 * nu * e12
    P = ops.P
    sig_eps = np.real(
        (P * (s11 * np.conj(e11) + 2.0 * s12 * np.conj(e12) + s22 * np.conj(e22))).sum()
    )
    u_norm2 = np.real((P * (W1 * np.conj(W1) + W2 * np.conj(W2))).sum())
    return float(sig_eps + u_norm2)


def _pressure_plate_budget(gen: GeneratorMatrices, v: np.ndarray) -> float:
    """||p||^2 + ||L2 w1||^2."""
    space = gen.space
    ops = operators(space.grid)
    p = v[space.sl_p]
    c = ops.L2b @ v[space.sl_w1]
    return float(
        np.real((ops.P * p * np.conj(p)).sum())
        + np.real((ops.pbeam * c * np.conj(c)).sum())
    )


def dissipativity_scan(
    gen: GeneratorMatrices,
    metric: WeightedMetric,
    samples: int,
    seed: int,
    delta: float = 0.25,
) -> DissipativityReport:
    """Sample Re((G phi, phi)) / |||phi|||^2 over random invariant-subspace states.

    Also reports the smallest constant C for which every sample satisfies

        q <= (-1/4 + C r_u) [(sigma, eps) + ||u||^2] + (-1/2 + C delta) xi [...],

    the measured stand-in for the unquantified constants of the estimate.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    ids = np.arange(samples)
    qs = np.empty(samples)
    flows = np.empty(samples)
    pps = np.empty(samples)
    consts = []
    for k in range(samples):
        v = gen.space.random_state(rng)
        Gv = gen.G @ v
        norm2 = np.real(metric.inner(v, v))
        q = np.real(metric.inner(Gv, v))
        qs[k] = q / norm2
        flows[k] = _flow_budget(gen, v)
        pps[k] = _pressure_plate_budget(gen, v)
        denom = metric.r_u * flows[k] + delta * metric.xi * pps[k]
        if denom > 0:
            consts.append((q + 0.25 * flows[k] + 0.5 * metric.xi * pps[k]) / denom)
    measured = float(max(consts)) if consts else 0.0
    return DissipativityReport(
        r_u=metric.r_u, xi=metric.xi, delta=delta,
        sample_ids=ids, q_over_norm2=qs, flow_budget=flows,
        pressure_plate_budget=pps,
        max_q_over_norm2=float(qs.max()), measured_constant=measured,
    )


# ---------------------------------------------------------------------------
# Implicit evolution
# ---------------------------------------------------------------------------


def evolve(
    gen: GeneratorMatrices,
    metric: WeightedMetric,
    phi0: State | np.ndarray,
    dt: float,
    T: float,
) -> tuple[EnergyTrace, State]:
    """Backward-difference evolution, energies recorded every step.

    Each step solves (I - dt G) phi_new = phi, i.e. the resolvent at
    a = 1/dt through the same bordered machinery.  The initial state is
    projected onto the invariant subspace first.
    """
    if dt <= 0.0:
        raise ValueError(f"time step must be positive, got dt={dt}")
    space = metric.space
    v = space.to_reduced(phi0) if isinstance(phi0, State) else np.asarray(phi0, dtype=float)
    v = space.project_h0_vec(v)
    nsteps = int(round(T / dt)) if T > 0 else 0
    a = 1.0 / dt
    solver = ShiftedSolver(gen, a) if nsteps > 0 else None
    mass = gen.mass()
    mrow = space.mean_row()

    times = [0.0]
    ew = [float(np.real(metric.inner(v, v)))]
    es = [float(np.real(np.vdot(v, mass @ v)))]
    drift = [float(abs(mrow @ v))]
    for k in range(1, nsteps + 1):
        v, backward = solver.solve(a * v)
        if backward > RESIDUAL_TOL:
            raise SolveFailed(f"step {k}: backward error {backward:.3e}")
        times.append(k * dt)
        ew.append(float(np.real(metric.inner(v, v))))
        es.append(float(np.real(np.vdot(v, mass @ v))))
        drift.append(float(abs(mrow @ v)))
    trace = EnergyTrace(
        times=np.array(times), E_weighted=np.array(ew),
        E_standard=np.array(es), mean_drift=np.array(drift),
    )
    return trace, space.to_state(v)


# ---------------------------------------------------------------------------
# Spectrum diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EigenRecord:
    index: int
    value: complex
    residual: float
    converged: bool


def spectrum_leading(
    gen: GeneratorMatrices,
    metric: WeightedMetric,
    k: int,
    dense_limit: int = 1800,
    shift: float = 1e-3,
) -> list[EigenRecord]:
    """k rightmost eigenvalues of G with Euclidean residuals.

    Dense eigensolve below `dense_limit` unknowns, otherwise shift-invert
    Arnoldi about a small positive shift.  Residuals above 1e-6 mark the
    record as not converged; that is reported, not raised.
    """
    if k < 1:
        raise ValueError("need k >= 1 eigenvalues")
    G = gen.G
    n = gen.n_dof
    if n <= dense_limit:
        vals, vecs = scipy.linalg.eig(G.toarray())
    else:
        kk = min(max(2 * k, k + 4), n - 2)
        vals, vecs = spla.eigs(sp.csc_matrix(G), k=kk, sigma=shift, which="LM")
    order = np.argsort(-np.real(vals))
    out = []
    for rank, idx in enumerate(order[:k]):
        lam = complex(vals[idx])
        vec = vecs[:, idx]
        res = float(
            np.linalg.norm(G @ vec - lam * vec) / (np.linalg.norm(vec) * max(1.0, abs(lam)))
        )
        out.append(EigenRecord(index=rank, value=lam, residual=res, converged=res <= 1e-6))
    return out
