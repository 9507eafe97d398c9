"""Batch front end: run one evolution (or an oracle check) from a config,
persist the trace, its derivative and a flat summary, or sweep a parameter
grid into a plot-ready table.

Config files are flat ``key = value`` text; any command-line flag of the
same name overrides the file.  Exit codes: 0 fitted (clean or noisy),
1 usage error, 2 no linear window, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import estimator, models, oracle
from .estimator import GapTrace, estimate_gap
from .imps import EvolutionSchedule, run_evolution_1d
from .ipeps import run_evolution_peps

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_WINDOW = 2
EXIT_NUMERIC = 3

MODELS = ("tfim2d", "tfim3d", "haldane", "oracle-random")


@dataclass
class RunConfig:
    """Everything one run needs; defaults are echoed into the summary."""

    model: str = "tfim2d"
    J: float = 0.2
    g: float = 1.0
    scheme: str = "mpo"     # peps models only: mpo | gates
    D: int = -1             # bond dimension (oracle-random: Hilbert dimension);
                            # <= 0 picks the per-model default
    dtau: float = -1.0      # <= 0 picks the per-scheme default (0.2 mpo, 0.05 gates)
    tau_max: float = -1.0   # <= 0 picks a per-model default
    measure_every: int = 1
    seed: int = 0
    outdir: str = "."
    tag: str = ""
    so_tol: float = 1e-10
    so_every: int = 10
    window_rel_tol: float = -1.0  # <= 0: 5e-3 (mpo/tebd) or 5e-2 (gates)
    flatten: int = -1             # <= 0: 1 (mpo/tebd) or 15 (gates)

    def resolve(self) -> "RunConfig":
        cfg = RunConfig(**{f.name: getattr(self, f.name) for f in fields(self)})
        if cfg.model not in MODELS:
            raise ValueError(f"unknown model {cfg.model!r} (choose from {MODELS})")
        if cfg.scheme not in ("mpo", "gates"):
            raise ValueError("scheme must be 'mpo' or 'gates'")
        if cfg.dtau <= 0:
            cfg.dtau = 0.05 if (cfg.scheme == "gates" or cfg.model == "haldane") else 0.2
        if cfg.tau_max <= 0:
            cfg.tau_max = {"haldane": 25.0, "oracle-random": 30.0}.get(cfg.model, 32.0)
        if cfg.D <= 0:
            cfg.D = {"tfim2d": 8, "tfim3d": 4, "haldane": 32,
                     "oracle-random": 10}[cfg.model]
        if cfg.window_rel_tol <= 0:
            cfg.window_rel_tol = 5e-2 if _uses_gates(cfg) else 5e-3
        if cfg.flatten <= 0:
            cfg.flatten = 15 if _uses_gates(cfg) else 1
        if cfg.measure_every < 1:
            raise ValueError("measure_every must be positive")
        if not cfg.tag:
            cfg.tag = cfg.model
        return cfg


def _uses_gates(cfg: RunConfig) -> bool:
    return cfg.model in ("tfim2d", "tfim3d") and cfg.scheme == "gates"


def parse_config_file(path: str) -> dict:
    values = {}
    names = {f.name for f in fields(RunConfig)}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in names:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = val
    return values


def _coerce(cfg_kwargs: dict) -> dict:
    out = {}
    types = {f.name: f.type for f in fields(RunConfig)}
    for key, val in cfg_kwargs.items():
        t = types[key]
        if t == "int":
            out[key] = int(val)
        elif t == "float":
            out[key] = float(val)
        else:
            out[key] = str(val)
    return out


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_trace_csv(path: Path, trace: GapTrace) -> None:
    lines = ["tau,C"]
    lines += [f"{t!r},{c!r}" for t, c in zip(trace.taus, trace.cs)]
    path.write_text("\n".join(lines) + "\n")


def write_derivative_csv(path: Path, taus_d, deriv) -> None:
    lines = ["tau,dCdtau"]
    lines += [f"{t!r},{d!r}" for t, d in zip(taus_d, deriv)]
    path.write_text("\n".join(lines) + "\n")


def write_summary(path: Path, record: dict) -> None:
    lines = [f"{k}={_format(v)}" for k, v in record.items()]
    path.write_text("\n".join(lines) + "\n")


def _oracle_random_trace(cfg: RunConfig) -> tuple[GapTrace, dict]:
    """Seeded random dense instance evolved exactly on a tau grid."""
    rng = np.random.default_rng(cfg.seed)
    dim = max(int(cfg.D), 4)
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = (a + a.conj().T) / 2.0
    d = oracle.spectral_decompose(h)
    b = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    obs = (b + b.conj().T) / 2.0
    phi0 = rng.normal(size=dim)
    cls = oracle.classify_overlap(d, obs, phi0)
    if cls.kind is oracle.OverlapKind.NEITHER:
        raise RuntimeError("random instance satisfies neither overlap condition")
    taus, cs = [], []
    c_start = None
    for step in range(int(round(cfg.tau_max / cfg.dtau)) + 1):
        tau = step * cfg.dtau
        val = abs(oracle.commutator_expectation_exact(d, obs, phi0, tau))
        if val == 0.0:
            break
        c = float(np.log(val))
        taus.append(tau)
        cs.append(c)
        if c_start is None:
            c_start = c
        elif c - c_start < np.log(1e-14):
            break
    meta = {
        "model": "oracle-random",
        "scheme": "exact",
        "D": dim,
        "dtau": cfg.dtau,
        "seed": cfg.seed,
        "exact_gap": d.gap(),
        "overlap_class": cls.kind.value,
    }
    return GapTrace(np.array(taus), np.array(cs), meta), meta


def execute_run(cfg: RunConfig) -> tuple[GapTrace, "estimator.GapEstimate", dict]:
    """Run the configured evolution and fit the gap (no file I/O)."""
    cfg = cfg.resolve()
    schedule = EvolutionSchedule(
        dtau=cfg.dtau,
        tau_max=cfg.tau_max,
        measure_every=cfg.measure_every,
        scheme=cfg.scheme if cfg.model.startswith("tfim") else "gates",
        D_max=cfg.D,
        seed=cfg.seed,
        so_tol=cfg.so_tol,
        so_every=cfg.so_every,
    )
    extra: dict = {}
    if cfg.model == "oracle-random":
        trace, extra = _oracle_random_trace(cfg)
    elif cfg.model == "haldane":
        trace = run_evolution_1d(models.haldane_model(), schedule, cfg.D, cfg.seed)
    elif cfg.model == "tfim2d":
        trace = run_evolution_peps(models.tfim_model(2, cfg.J, cfg.g), schedule, cfg.D)
    elif cfg.model == "tfim3d":
        trace = run_evolution_peps(models.tfim_model(3, cfg.J, cfg.g), schedule, cfg.D)
    else:
        raise ValueError(f"unknown model {cfg.model!r}")
    est = estimate_gap(trace, rel_tol=cfg.window_rel_tol, flatten=cfg.flatten)
    return trace, est, extra


def run(cfg: RunConfig) -> int:
    """Execute one run and persist trace, derivative and summary files."""
    try:
        cfg = cfg.resolve()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        trace, est, extra = execute_run(cfg)
    except Exception as exc:  # numeric failure: report and bail out
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    wall = time.perf_counter() - start

    write_trace_csv(outdir / f"{cfg.tag}_trace.csv", trace)
    taus_d, deriv = estimator.numerical_derivative(estimator.drop_spikes(trace))
    write_derivative_csv(outdir / f"{cfg.tag}_deriv.csv", taus_d, deriv)

    record = {
        "gap": est.gap,
        "err": est.error_bar,
        "quality": est.quality,
        "window_lo": est.window[0] if est.window else float("nan"),
        "window_hi": est.window[1] if est.window else float("nan"),
        "intercept": est.intercept,
        "derivative_std": est.derivative_std,
        "derivative_fluctuation": est.derivative_fluctuation,
        "n_samples": len(trace),
        "wall_time_s": wall,
    }
    for f in fields(RunConfig):
        record[f"cfg_{f.name}"] = getattr(cfg, f.name)
    for key, val in extra.items():
        record[f"info_{key}"] = val
    write_summary(outdir / f"{cfg.tag}_summary.txt", record)

    if est.window is None:
        print(f"{cfg.tag}: no linear window ({est.quality})")
        return EXIT_NO_WINDOW
    print(
        f"{cfg.tag}: gap = {est.gap:.6g} +- {est.error_bar:.2g} "
        f"({est.quality}, window [{est.window[0]:g}, {est.window[1]:g}], "
        f"{wall:.1f}s)"
    )
    return EXIT_OK


def sweep(cfg: RunConfig, param: str, values: list[float]) -> int:
    """Run a grid over one numeric parameter, aggregating gap vs value."""
    if not values:
        print("error: empty sweep grid", file=sys.stderr)
        return EXIT_USAGE
    if param not in ("J", "g", "D", "dtau"):
        print(f"error: cannot sweep {param!r}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = cfg.resolve()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    worst = EXIT_OK
    for v in values:
        sub = RunConfig(**{f.name: getattr(cfg, f.name) for f in fields(RunConfig)})
        setattr(sub, param, int(v) if param == "D" else float(v))
        sub.tag = f"{cfg.tag}_{param}{v:g}"
        code = run(sub)
        worst = max(worst, code)
        summary = outdir / f"{sub.tag}_summary.txt"
        vals = dict(
            line.split("=", 1) for line in summary.read_text().splitlines()
        )
        rows.append((v, vals["gap"], vals["err"], vals["quality"]))
    lines = ["param,gap,err,quality"]
    lines += [f"{v!r},{g},{e},{q}" for v, g, e, q in rows]
    (outdir / f"{cfg.tag}_sweep.csv").write_text("\n".join(lines) + "\n")
    return worst


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    for f in fields(RunConfig):
        if f.type == "int":
            p.add_argument(f"--{f.name}", type=int)
        elif f.type == "float":
            p.add_argument(f"--{f.name}", type=float)
        else:
            p.add_argument(f"--{f.name}")


def _build_config(args: argparse.Namespace) -> RunConfig:
    kwargs: dict = {}
    if args.config:
        kwargs.update(_coerce(parse_config_file(args.config)))
    for f in fields(RunConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            kwargs[f.name] = val
    return RunConfig(**kwargs)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="specgap",
        description=(
            "Estimate spectral gaps of lattice models from the decay of the "
            "commutator expectation under imaginary-time evolution."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="one evolution, trace + summary files")
    _add_config_flags(p_run)
    p_sweep = sub.add_parser("sweep", help="grid over one parameter")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--param", required=True, help="J, g, D or dtau")
    p_sweep.add_argument(
        "--values", required=True, help="comma-separated grid values"
    )
    args = parser.parse_args(argv)
    try:
        cfg = _build_config(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "run":
        return run(cfg)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        print(f"error: bad grid values: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return sweep(cfg, args.param, values)


if __name__ == "__main__":
    sys.exit(main())
