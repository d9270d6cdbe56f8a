"""Command-line harness: config ingestion, dispatch, bit-exact reports.

Config files are INI-style sections of `key = value` lines:

    [grid]       nx, ny (required), Lx, Ly
    [physics]    nu, lambda, eta
    [ambient]    preset (zero | uniform-shear | solenoidal | compressive), amplitude
    [metric]     C1, C2, delta
    [resolvent]  a_list, b_list (comma-separated), samples, seed
    [evolve]     dt, T
    [check]      tolerance (multiplier on every check threshold)
    [output]     directory, emit_plots

Unknown sections or keys are rejected by name.  All module preconditions
are re-validated at load time, so an inadmissible ambient amplitude
surfaces as a ValidationError before any solve.

Subcommands: check, simulate, resolvent, spectrum, dissipativity.  CSV
files carry every float with 17 significant digits; identical config and
seed give byte-identical output.  Exit codes: 0 success, 2 config error,
3 numerical-check failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .ambient import PRESETS, ambient_preset, r_polynomial, u_star_norm
from .analysis import (
    dissipativity_scan,
    evolve,
    resolvent_sweep,
    spectrum_leading,
)
from .elliptic import CompatibilityViolated, NeumannData, elliptic_maps
from .generator import (
    Params,
    assemble_generator,
    commutator_check_1d,
    commutator_check_2d,
    numerical_adjoint,
)
from .grid import build_grid, divergence, gradient, inner_2d, norm_2d
from .weighted import AmbientTooLarge, build_metric, standard_gram, xi_parameter

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CHECK = 3
EXIT_IO = 4

SPECTRUM_COUNT = 8


class ParseError(Exception):
    """Malformed config file or unknown section/key."""


class ValidationError(Exception):
    """Config parsed but violates a module precondition."""


def fmt(x: float) -> str:
    """17 significant digits, reproducible."""
    return f"{x:.17g}"


@dataclass
class RunConfig:
    nx: int = 16
    ny: int = 16
    Lx: float = 1.0
    Ly: float = 1.0
    nu: float = 1.0
    lam: float = 1.0
    eta: float = 1.0
    preset: str = "zero"
    amplitude: float = 0.0
    C1: float = 1.0
    C2: float = 1.0
    delta: float = 0.25
    a_list: tuple = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    b_list: tuple = (0.0, 1.0, -1.0, 10.0, -10.0)
    samples: int = 5
    seed: int = 0
    dt: float = 0.01
    T: float = 1.0
    tolerance: float = 1.0
    directory: str = "."
    emit_plots: bool = False


_SCHEMA = {
    "grid": {"nx": int, "ny": int, "Lx": float, "Ly": float},
    "physics": {"nu": float, "lambda": float, "eta": float},
    "ambient": {"preset": str, "amplitude": float},
    "metric": {"C1": float, "C2": float, "delta": float},
    "resolvent": {"a_list": "floats", "b_list": "floats", "samples": int, "seed": int},
    "evolve": {"dt": float, "T": float},
    "check": {"tolerance": float},
    "output": {"directory": str, "emit_plots": bool},
}

_FIELD_OF = {
    ("physics", "lambda"): "lam",
    ("output", "directory"): "directory",
    ("output", "emit_plots"): "emit_plots",
}


def _parse_value(kind, raw: str, where: str):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is bool:
            low = raw.strip().lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if kind == "floats":
            return tuple(float(tok) for tok in raw.replace(",", " ").split())
        return raw.strip()
    except ValueError as exc:
        raise ParseError(f"cannot parse {where} = {raw!r}") from exc


def load_config(path: str) -> RunConfig:
    """Parse and validate a config file; defaults fill omitted keys."""
    if not os.path.exists(path):
        raise ParseError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keys are case-sensitive (T vs t)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ParseError(f"malformed config {path}: {exc}") from exc

    cfg = RunConfig()
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ParseError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            schema = _SCHEMA[section]
            if key not in schema:
                raise ParseError(f"unknown key {key!r} in section [{section}]")
            value = _parse_value(schema[key], raw, f"[{section}] {key}")
            setattr(cfg, _FIELD_OF.get((section, key), key), value)

    if not parser.has_section("grid") or not parser.items("grid"):
        raise ValidationError("config must provide a [grid] section with nx and ny")
    if not (parser.has_option("grid", "nx") and parser.has_option("grid", "ny")):
        raise ValidationError("grid section must set both nx and ny")

    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    try:
        build_grid(cfg.nx, cfg.ny, cfg.Lx, cfg.Ly)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    if cfg.preset not in PRESETS:
        raise ValidationError(f"unknown ambient preset {cfg.preset!r}")
    if cfg.amplitude < 0.0:
        raise ValidationError("ambient amplitude must be nonnegative")
    if cfg.nu <= 0.0 or cfg.lam < 0.0 or cfg.eta <= 0.0:
        raise ValidationError("physics requires nu > 0, lambda >= 0, eta > 0")
    if cfg.C1 <= 0.0 or cfg.C2 <= 0.0:
        raise ValidationError("metric constants C1, C2 must be positive")
    if not (0.0 < cfg.delta):
        raise ValidationError("delta must be positive")
    a = np.asarray(cfg.a_list)
    if a.size == 0 or np.any(a <= 0.0) or np.any(np.diff(a) >= 0.0):
        raise ValidationError("a_list must be strictly decreasing and positive")
    if cfg.samples < 1:
        raise ValidationError("samples must be at least 1")
    if cfg.dt <= 0.0 or cfg.T < 0.0:
        raise ValidationError("need dt > 0 and T >= 0")
    if cfg.tolerance < 0.0:
        raise ValidationError("check tolerance must be nonnegative")
    # the smallness hypothesis is a precondition: surface it before any solve
    grid = build_grid(cfg.nx, cfg.ny, cfg.Lx, cfg.Ly)
    U = ambient_preset(cfg.preset, cfg.amplitude, grid)
    try:
        xi_parameter(cfg.C1, cfg.C2, r_polynomial(u_star_norm(U)))
    except AmbientTooLarge as exc:
        raise ValidationError(f"ambient field too large: {exc}") from exc


@dataclass
class Model:
    cfg: RunConfig
    grid: object
    U: object
    metric: object
    gen: object


def build_model(cfg: RunConfig) -> Model:
    grid = build_grid(cfg.nx, cfg.ny, cfg.Lx, cfg.Ly)
    U = ambient_preset(cfg.preset, cfg.amplitude, grid)
    metric = build_metric(U, cfg.C1, cfg.C2)
    params = Params(nu=cfg.nu, lam=cfg.lam, eta=cfg.eta, U=U, metric=metric)
    gen = assemble_generator(params, grid)
    return Model(cfg=cfg, grid=grid, U=U, metric=metric, gen=gen)


def _outdir(cfg: RunConfig) -> str:
    try:
        os.makedirs(cfg.directory, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {cfg.directory!r}: {exc}") from exc
    return cfg.directory


def _write_csv(path: str, header: str, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write(header + "\n")
            for row in rows:
                fh.write(",".join(row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path!r}: {exc}") from exc


def _plot_series(path: str, xs, series: dict, xlabel: str, logy: bool = False,
                 logx: bool = False) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, ys in series.items():
        ax.plot(xs, ys, label=label, marker=".")
    if logy:
        ax.set_yscale("log")
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------


def _run_checks(model: Model) -> list[dict]:
    cfg = model.cfg
    grid, metric, gen = model.grid, model.metric, model.gen
    rng = np.random.default_rng(cfg.seed)
    checks: list[dict] = []

    def add(name: str, value: float, threshold: float | None) -> None:
        scaled = None if threshold is None else threshold * cfg.tolerance
        passed = True if scaled is None else bool(value <= scaled)
        checks.append({"name": name, "value": float(value),
                       "threshold": scaled, "passed": passed})

    # summation by parts
    worst = 0.0
    for _ in range(100):
        p = rng.standard_normal(grid.shape)
        u1 = rng.standard_normal(grid.shape)
        u2 = rng.standard_normal(grid.shape)
        u1[0, :] = u1[-1, :] = 0.0
        u2[:, 0] = u2[:, -1] = 0.0
        gx, gy = gradient(grid, p)
        lhs = inner_2d(grid, divergence(grid, u1, u2), p) \
            + inner_2d(grid, u1, gx) + inner_2d(grid, u2, gy)
        scale = norm_2d(grid, p) * np.sqrt(norm_2d(grid, u1) ** 2 + norm_2d(grid, u2) ** 2)
        worst = max(worst, abs(lhs) / scale)
    add("sbp_identity", worst, 1e-10)

    # elliptic oracles on the unit-square closed forms, scaled to this grid
    em = elliptic_maps(grid)
    X, Y = grid.meshgrid()
    xb = grid.xcoords()
    kx = np.pi / grid.Lx
    datum = np.sin(kx * xb)
    exact_d = np.sin(kx * X) * np.sinh(kx * (Y + grid.Ly)) / np.sinh(kx * grid.Ly)
    err_d = float(np.abs(em.dirichlet_map(datum) - exact_d).max())
    add("elliptic_dirichlet_oracle", err_d, 5.0 * (grid.hx**2 + grid.hy**2))
    f = np.ones(grid.shape)
    chi = np.full(grid.n_beam, -grid.Ly)
    psi = em.neumann_potential(NeumannData(f, chi))
    exact_n = -(Y**2) / 2 - grid.Ly * Y - grid.Ly**2 / 3.0
    err_n = float(np.abs(psi - exact_n).max())
    add("elliptic_neumann_oracle", err_n, 5.0 * (grid.hx**2 + grid.hy**2))
    try:
        em.neumann_potential(NeumannData(np.ones(grid.shape), np.zeros(grid.n_beam)))
        add("elliptic_compatibility_guard", 1.0, 0.0)
    except CompatibilityViolated:
        add("elliptic_compatibility_guard", 0.0, 1e-300)

    # measured elliptic boundedness constants (reported, not gated)
    add("neumann_h1_constant_measured",
        float(norm_2d(grid, psi) / (norm_2d(grid, f) + 1.0)), None)

    # xi root residual
    r_u = metric.r_u
    res = abs((metric.C1 + metric.C2 * r_u) * metric.xi**2
              + (metric.C2 * r_u - 0.5) * metric.xi + metric.C2 * r_u)
    add("xi_root_residual", res, 1e-12)

    # metric reduction at U = 0
    U0 = ambient_preset("zero", 0.0, grid)
    m0 = build_metric(U0, cfg.C1, cfg.C2)
    diff = abs(m0.gram() - standard_gram(m0.space)).max()
    add("metric_reduction_zero_ambient", float(diff), 1e-12)

    # adjoint identity and symmetry
    adj = numerical_adjoint(gen)
    worst_id, worst_sym = 0.0, 0.0
    for _ in range(20):
        x = gen.space.random_state(rng)
        y = gen.space.random_state(rng)
        nx_, ny_ = metric.norm(x), metric.norm(y)
        worst_id = max(worst_id, abs(metric.inner(gen.G @ x, y)
                                     - metric.inner(x, adj.matvec(y))) / (nx_ * ny_))
        worst_sym = max(worst_sym, abs(metric.inner(adj.matvec(x), y)
                                       - metric.inner(x, gen.G @ y)) / (nx_ * ny_))
    add("adjoint_identity", worst_id, 1e-10)
    add("adjoint_involution", worst_sym, 1e-10)

    # dissipativity scan
    rep = dissipativity_scan(gen, metric, samples=50, seed=cfg.seed, delta=cfg.delta)
    tol_scan = 1e-6 if model.U.is_zero else 1e-4
    add("dissipativity_max_q", rep.max_q_over_norm2, tol_scan)
    add("dissipativity_measured_constant", rep.measured_constant, None)
    if rep.max_q_over_norm2 > tol_scan * cfg.tolerance:
        worst_idx = int(np.argmax(rep.q_over_norm2))
        rng_replay = np.random.default_rng(cfg.seed)
        offender = None
        for k in range(worst_idx + 1):
            offender = gen.space.random_state(rng_replay)
        np.save(os.path.join(_outdir(cfg), "dissipativity_offender.npy"), offender)

    # conservation and monotonicity along a short trajectory
    phi0 = gen.space.to_state(gen.space.random_state(rng))
    trace, _ = evolve(gen, metric, phi0, dt=cfg.dt, T=min(cfg.T, 50 * cfg.dt))
    rel_drift = float(trace.mean_drift.max() / np.sqrt(trace.E_standard[0]))
    add("mean_conservation", rel_drift, 1e-8)
    if len(trace.E_weighted) > 1:
        growth = float(np.max(np.diff(trace.E_weighted) / trace.E_weighted[:-1]))
    else:
        growth = 0.0
    add("energy_monotonic", max(growth, 0.0), 1e-8)

    # commutator identities on polynomial inputs; coarse grids keep the
    # 1/h^2 stencil roundoff below the match tolerance
    xs = np.linspace(0.0, 1.0, 33)
    rep1 = commutator_check_1d(xs**3, xs**2, xs[1] - xs[0])
    add("commutator_1d", rep1.discrepancy, 1e-12)
    xg = np.linspace(0.0, 1.0, 13)
    yg = np.linspace(-1.0, 0.0, 13)
    XX, YY = np.meshgrid(xg, yg, indexing="ij")
    rep2 = commutator_check_2d(XX * YY, XX, np.zeros_like(XX),
                               xg[1] - xg[0], yg[1] - yg[0])
    add("commutator_2d", rep2.discrepancy, 1e-12)
    add("commutator_written_variant_discrepancy", rep2.discrepancy_written_variant, None)

    return checks


def cmd_check(cfg: RunConfig) -> int:
    model = build_model(cfg)
    checks = _run_checks(model)
    passed = all(c["passed"] for c in checks)
    summary = {"command": "check", "version": __version__, "passed": passed,
               "checks": checks}
    print(json.dumps(summary, indent=2))
    if not passed:
        failing = [c["name"] for c in checks if not c["passed"]]
        print(f"FAILED checks: {', '.join(failing)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate / resolvent / spectrum / dissipativity
# ---------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig) -> int:
    model = build_model(cfg)
    rng = np.random.default_rng(cfg.seed)
    phi0 = model.gen.space.to_state(model.gen.space.random_state(rng))
    trace, _ = evolve(model.gen, model.metric, phi0, dt=cfg.dt, T=cfg.T)
    out = _outdir(cfg)
    path = os.path.join(out, "energy.csv")
    rows = (
        [fmt(t), fmt(ew), fmt(es), fmt(md)]
        for t, ew, es, md in zip(trace.times, trace.E_weighted,
                                 trace.E_standard, trace.mean_drift)
    )
    _write_csv(path, "t,E_weighted,E_standard,mean_drift", rows)
    if cfg.emit_plots:
        _plot_series(os.path.join(out, "energy.png"), trace.times,
                     {"E_weighted": trace.E_weighted, "E_standard": trace.E_standard},
                     xlabel="t", logy=True)
    return EXIT_OK


def _sample_block(model: Model) -> np.ndarray:
    rng = np.random.default_rng(model.cfg.seed)
    return np.stack([model.gen.space.random_state(rng)
                     for _ in range(model.cfg.samples)])


def cmd_resolvent(cfg: RunConfig) -> int:
    model = build_model(cfg)
    samples = _sample_block(model)
    records = resolvent_sweep(model.gen, model.metric, cfg.b_list, cfg.a_list, samples)
    out = _outdir(cfg)
    rows = (
        [fmt(r.b), fmt(r.a), str(r.sample_id), fmt(r.residual),
         fmt(r.norm_weighted), fmt(r.criterion_value)]
        for r in records
    )
    _write_csv(os.path.join(out, "resolvent.csv"),
               "b,a,sample_id,residual,norm_weighted,criterion_value", rows)
    if cfg.emit_plots:
        series = {}
        for b in cfg.b_list:
            vals = [np.nanmean([r.criterion_value for r in records
                                if r.a == a and r.b == b]) for a in cfg.a_list]
            series[f"b={b:g}"] = vals
        _plot_series(os.path.join(out, "resolvent.png"), list(cfg.a_list), series,
                     xlabel="a", logx=True, logy=True)
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig) -> int:
    model = build_model(cfg)
    eigs = spectrum_leading(model.gen, model.metric, k=SPECTRUM_COUNT)
    out = _outdir(cfg)
    rows = (
        [str(e.index), fmt(e.value.real), fmt(e.value.imag), fmt(e.residual)]
        for e in eigs
    )
    _write_csv(os.path.join(out, "spectrum.csv"), "index,re,im,residual", rows)
    if cfg.emit_plots:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 4))
        ax.scatter([e.value.real for e in eigs], [e.value.imag for e in eigs])
        ax.axvline(0.0, color="k", lw=0.5)
        ax.set_xlabel("Re")
        ax.set_ylabel("Im")
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(os.path.join(out, "spectrum.png"), dpi=110)
        plt.close(fig)
    return EXIT_OK


def cmd_dissipativity(cfg: RunConfig) -> int:
    model = build_model(cfg)
    rep = dissipativity_scan(model.gen, model.metric,
                             samples=max(cfg.samples, 1), seed=cfg.seed,
                             delta=cfg.delta)
    out = _outdir(cfg)
    rows = (
        [str(int(i)), fmt(q), fmt(fb), fmt(pb)]
        for i, q, fb, pb in zip(rep.sample_ids, rep.q_over_norm2,
                                rep.flow_budget, rep.pressure_plate_budget)
    )
    _write_csv(os.path.join(out, "dissipativity.csv"),
               "sample_id,q_over_norm2,flow_budget,pressure_plate_budget", rows)
    if cfg.emit_plots:
        _plot_series(os.path.join(out, "dissipativity.png"), rep.sample_ids,
                     {"q_over_norm2": rep.q_over_norm2}, xlabel="sample")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


_COMMANDS = {
    "check": cmd_check,
    "simulate": cmd_simulate,
    "resolvent": cmd_resolvent,
    "spectrum": cmd_spectrum,
    "dissipativity": cmd_dissipativity,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fsilab",
        description="Flow-structure stability laboratory: checks, simulation, "
                    "resolvent sweeps, spectrum and dissipativity reports.",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to the INI config file")
    parser.add_argument("--out", help="override [output] directory")
    parser.add_argument("--seed", type=int, help="override [resolvent] seed")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if args.out is not None:
            cfg.directory = args.out
        if args.seed is not None:
            cfg.seed = args.seed
        return _COMMANDS[args.command](cfg)
    except (ParseError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
