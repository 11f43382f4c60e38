"""Experiment runner: ``rootflow <subcommand> --config <path> [--out DIR]``.

Every invocation writes one CSV per run plus a JSON manifest.  Exit status:
0 all checks passed, 1 a check failed, 2 configuration error, 3 engine abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .coupling import (
    COLUMNS,
    CoupledRunAborted,
    DensitySpec,
    ExperimentConfig,
    error_vector,
    initial_roots,
    iterate_coupled,
    predict_gap_splits,
    run_coupled,
)
from .errors import ConfigError, ConvergenceError, RootflowError
from .kernel import envelope_constants, kernel_matrix, row_sum_bounds
from .pde import Integrator, PdeState, observables
from .trigpoly import assemble_derivative, derivative_roots_oracle, gap_roots

log = logging.getLogger("rootflow")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3

SUBCOMMANDS = (
    "pde-run",
    "roots-run",
    "coupled-run",
    "scaling-sweep",
    "kernel-check",
    "predict-check",
)

DEFAULT_TOLERANCES = {
    "mean_drift": 1e-12,
    "max_principle_slack": 1e-10,
    "sweep_E_slope": -1.25,
    "sweep_pred_slope": -1.4,
    "sweep_mean_compat_slope": -1.8,
    "kernel_envelope_ratio": 50.0,
    "kernel_F_margin": 0.15,
    "oracle_agreement": 1e-9,
    "split_sum": 1e-14,
}

ORACLE_MAX_ROOTS = 64

_TOP_KEYS = {
    "n", "N", "density", "perturbation", "t_final", "checkpoint_stride",
    "output", "tolerances", "sweep", "kernel",
}


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


def _number(data, key, kind=float, where=""):
    val = data[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"key {where}{key!r} must be a number, got {val!r}")
    if kind is int and float(val) != int(val):
        raise ConfigError(f"key {where}{key!r} must be an integer, got {val!r}")
    return kind(val)


def _density(spec) -> DensitySpec:
    if not isinstance(spec, dict):
        raise ConfigError("key 'density' must be an object")
    unknown = set(spec) - {"type", "amplitude", "a0", "cos", "sin"}
    if unknown:
        raise ConfigError(f"unknown key 'density.{sorted(unknown)[0]}'")
    kind = spec.get("type", "cosine")
    if kind == "cosine":
        amp = _number(spec, "amplitude", where="density.") if "amplitude" in spec else 0.5
        if abs(amp) >= 1:
            raise ConfigError(
                f"key 'density.amplitude' = {amp} makes 1 + a cos x vanish; need |a| < 1"
            )
        return DensitySpec("cosine", amplitude=amp)
    if kind == "fourier":
        a0 = _number(spec, "a0", where="density.") if "a0" in spec else 1 / (2 * math.pi)
        cos = tuple(float(c) for c in spec.get("cos", ()))
        sin = tuple(float(s) for s in spec.get("sin", ()))
        return DensitySpec("fourier", a0=a0, cos=cos, sin=sin)
    raise ConfigError(f"key 'density.type' must be 'cosine' or 'fourier', got {kind!r}")


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r}")
    if "n" not in data:
        raise ConfigError("missing required key 'n'")
    kw = {"n": _number(data, "n", int)}
    if kw["n"] < 1:
        raise ConfigError("key 'n' must be positive")
    if "N" in data and data["N"] is not None:
        kw["N"] = _number(data, "N", int)
    if "density" in data:
        kw["density"] = _density(data["density"])
    pert = data.get("perturbation", {})
    unknown = set(pert) - {"Z0", "eps", "seed"}
    if unknown:
        raise ConfigError(f"unknown key 'perturbation.{sorted(unknown)[0]}'")
    for key, kind in (("Z0", float), ("eps", float), ("seed", int)):
        if key in pert:
            kw[key] = _number(pert, key, kind, "perturbation.")
    if kw.get("Z0", 0.0) < 0 or kw.get("eps", 0.5) <= 0:
        raise ConfigError("perturbation needs Z0 >= 0 and eps > 0")
    if "t_final" in data:
        kw["t_final"] = _number(data, "t_final")
    if "checkpoint_stride" in data:
        kw["checkpoint_stride"] = _number(data, "checkpoint_stride", int)
    if "output" in data:
        kw["output"] = str(data["output"])
    tol = dict(DEFAULT_TOLERANCES)
    for key, val in data.get("tolerances", {}).items():
        if key not in DEFAULT_TOLERANCES:
            raise ConfigError(f"unknown key 'tolerances.{key}'")
        tol[key] = _number(data["tolerances"], key, where="tolerances.")
    kw["tolerances"] = tol
    sweep = data.get("sweep", {})
    if "ns" in sweep:
        kw["sweep_ns"] = tuple(sorted(int(v) for v in sweep["ns"]))
    if "times" in sweep:
        kw["sweep_times"] = tuple(float(v) for v in sweep["times"])
    if "times" in data.get("kernel", {}):
        kw["kernel_times"] = tuple(float(v) for v in data["kernel"]["times"])
    return ExperimentConfig(**kw)


def parse_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def config_echo(config: ExperimentConfig) -> dict:
    d = asdict(config)
    d["density"] = asdict(config.density)
    return d


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


def fit_loglinear(xs, ys, mode: str = "power") -> tuple[float, float]:
    """Least-squares slope of ``log y`` against ``x`` (rate) or ``log x`` (power).

    Returns ``(slope, r_squared)``.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size < 3 or x.size != y.size:
        raise ValueError("need at least 3 matching points")
    if np.any(~(y > 0)):
        raise ValueError("ys must be positive")
    if mode == "power":
        if np.any(~(x > 0)):
            raise ValueError("power fit needs positive xs")
        x = np.log(x)
    elif mode != "rate":
        raise ValueError(f"mode must be 'rate' or 'power', got {mode!r}")
    ly = np.log(y)
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * x + icpt)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return float(slope), r2


# ---------------------------------------------------------------------------
# runs
# ---------------------------------------------------------------------------


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    versions: dict
    seed: int
    timings: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    error: str | None = None
    exit_status: int = EXIT_OK

    def check(self, name: str, passed: bool, **detail):
        self.checks[name] = {"passed": bool(passed), **detail}

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _stem(config: ExperimentConfig, default: str) -> str:
    return config.output or default


def _pde_run(config, out: Path, manifest: RunManifest, workers: int):
    tol = config.tolerances
    u0 = config.density.grid(config.N)
    integ = Integrator(PdeState(u0, 0.0))
    rows = []
    obs0 = observables(integ.state)
    records = [obs0]
    stride = config.checkpoint_stride
    for k in range(stride, config.steps + 1, stride):
        records.append(observables(integ.advance_to(k / (2 * config.n))))
    if config.steps % stride:
        records.append(observables(integ.advance_to(config.steps / (2 * config.n))))
    cols = [f.name for f in fields(records[0])]
    rows = [[getattr(r, c) for c in cols] for r in records]
    path = out / f"{_stem(config, f'pde_n{config.n}')}.csv"
    write_csv(path, cols, rows)
    manifest.outputs.append(str(path))
    drift = max(abs(r.mean - obs0.mean) for r in records)
    manifest.check("mean_conservation", drift <= tol["mean_drift"], value=drift,
                   threshold=tol["mean_drift"])
    M = np.array([r.max for r in records])
    m = np.array([r.min for r in records])
    slack = tol["max_principle_slack"] * max(1.0, float(np.abs(M).max()))
    rise = float(np.max(np.diff(M), initial=0.0))
    fall = float(-np.min(np.diff(m), initial=0.0))
    manifest.check("max_principle", rise <= slack and fall <= slack,
                   max_increase=rise, min_decrease=fall, threshold=slack)


def _roots_run(config, out: Path, manifest: RunManifest, workers: int):
    tol = config.tolerances
    u0 = config.density.grid(config.N)
    cfg = initial_roots(config, u0)
    n = config.n
    cols = ["t", "min_gap", "max_gap", "gap_dev_max", "log_abs_factor"]
    rows = []
    interlaced = True
    oracle_err = None
    for k in range(config.steps + 1):
        if k % config.checkpoint_stride == 0 or k == config.steps:
            g = cfg.gaps
            rows.append([k / (2 * n), g.min(), g.max(),
                         np.abs(g - math.pi / n).max(), cfg.log_abs_factor])
        if k == config.steps:
            break
        y = gap_roots(cfg)
        interlaced &= bool(np.all((y > cfg.roots) & (y < cfg.roots + cfg.gaps)))
        nxt = assemble_derivative(cfg, y)
        if k == 0 and cfg.roots.size <= ORACLE_MAX_ROOTS:
            try:
                oracle = derivative_roots_oracle(cfg)
            except ConvergenceError as exc:
                # coefficient-space oracle loses the roots when |p| spans too many decades
                manifest.summary["oracle_first_step"] = f"skipped: {exc}"
            else:
                oracle_err = float(np.abs(oracle.roots - nxt.roots).max())
        cfg = nxt
    path = out / f"{_stem(config, f'roots_n{n}')}.csv"
    write_csv(path, cols, rows)
    manifest.outputs.append(str(path))
    manifest.check("interlacing", interlaced)
    if oracle_err is not None:
        manifest.check("oracle_first_step", oracle_err <= tol["oracle_agreement"],
                       value=oracle_err, threshold=tol["oracle_agreement"])


def _coupled_run(config, out: Path, manifest: RunManifest, workers: int):
    tol = config.tolerances
    path = out / f"{_stem(config, f'coupled_n{config.n}')}.csv"
    try:
        records = run_coupled(config)
    except CoupledRunAborted as exc:
        write_csv(path, COLUMNS, [[getattr(r, c) for c in COLUMNS] for r in exc.partial])
        manifest.outputs.append(str(path))
        raise
    write_csv(path, COLUMNS, [[getattr(r, c) for c in COLUMNS] for r in records])
    manifest.outputs.append(str(path))
    E = np.array([r.E_inf for r in records])
    manifest.check("finite_error", bool(np.all(np.isfinite(E))), E_inf_max=float(E.max()))
    drift = max(abs(r.mean_u - records[0].mean_u) for r in records)
    manifest.check("mean_conservation", drift <= tol["mean_drift"], value=drift,
                   threshold=tol["mean_drift"])


def _sweep_member(config: ExperimentConfig):
    t_max = max(config.sweep_times)
    cfg = config.with_(t_final=t_max, checkpoint_stride=1)
    return cfg.n, run_coupled(cfg)


def _map(fn, items, workers: int):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _at_time(records, t):
    return min(records, key=lambda r: abs(r.t - t))


def scaling_summary(results: dict, times, tol: dict) -> tuple[dict, dict]:
    """Fitted power slopes over n; returns (summary, checks)."""
    ns = sorted(results)
    summary, checks = {"ns": ns}, {}
    t_main = 0.5 if 0.5 in times else max(times)
    for t in times:
        E = [_at_time(results[n], t).E_inf for n in ns]
        slope, r2 = fit_loglinear(ns, E, "power")
        summary[f"E_inf_slope_t{t:g}"] = {"slope": slope, "r2": r2, "values": E}
    pred = [_at_time(results[n], t_main).pred_resid_max for n in ns]
    slope_p, r2_p = fit_loglinear(ns, pred, "power")
    summary["pred_resid_slope"] = {"slope": slope_p, "r2": r2_p, "t": t_main, "values": pred}
    t_mc = 0.25 if 0.25 in times else min(times)
    mc = [abs(_at_time(results[n], t_mc).sum_E_u) for n in ns]
    slope_m, r2_m = fit_loglinear(ns, mc, "power")
    summary["mean_compat_slope"] = {"slope": slope_m, "r2": r2_m, "t": t_mc, "values": mc}

    e_slope = summary[f"E_inf_slope_t{t_main:g}"]["slope"]
    checks["E_inf_slope"] = {"passed": e_slope <= tol["sweep_E_slope"], "value": e_slope,
                             "threshold": tol["sweep_E_slope"]}
    checks["pred_resid_slope"] = {"passed": slope_p <= tol["sweep_pred_slope"],
                                  "value": slope_p, "threshold": tol["sweep_pred_slope"]}
    checks["mean_compat_slope"] = {"passed": slope_m <= tol["sweep_mean_compat_slope"],
                                   "value": slope_m, "threshold": tol["sweep_mean_compat_slope"]}
    return summary, checks


def _scaling_sweep(config, out: Path, manifest: RunManifest, workers: int):
    members = [config.with_(n=n) for n in config.sweep_ns]
    pairs = _map(_sweep_member, members, workers)
    results = dict(sorted(pairs))
    for n, recs in results.items():
        path = out / f"{_stem(config, 'sweep')}_n{n}.csv"
        write_csv(path, COLUMNS, [[getattr(r, c) for c in COLUMNS] for r in recs])
        manifest.outputs.append(str(path))
    summary, checks = scaling_summary(results, config.sweep_times, config.tolerances)
    manifest.summary.update(summary)
    manifest.checks.update(checks)
    path = out / f"{_stem(config, 'sweep')}_summary.json"
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    manifest.outputs.append(str(path))


def kernel_rows_at(config: ExperimentConfig, times) -> list[dict]:
    """Kernel diagnostics of a coupled run at the steps nearest to ``times``."""
    n = config.n
    wanted = {int(round(t * 2 * n)) for t in times}
    cfg = config.with_(t_final=max(times))
    out = []
    for snap in iterate_coupled(cfg):
        if snap.k not in wanted:
            continue
        nxt = assemble_derivative(snap.cfg, snap.y_gap)
        K = kernel_matrix(snap.cfg, nxt, snap.state.u, snap.hu)
        S = K.sum(axis=1)
        F = row_sum_bounds(snap.cfg, snap.state.u, snap.hu)
        off = ~np.eye(K.shape[0], dtype=bool)
        c1, c2 = envelope_constants(K)
        out.append({
            "t": snap.t,
            "min_kappa": float(K[off].min()),
            "S_min": float(S.min()),
            "S_max": float(S.max()),
            "S_minus_F_max": float(np.max(S - F)),
            "c1": c1,
            "c2": c2,
            "envelope_ratio": c2 / c1,
        })
    return out


def _kernel_check(config, out: Path, manifest: RunManifest, workers: int):
    tol = config.tolerances
    rows = kernel_rows_at(config, config.kernel_times)
    cols = list(rows[0])
    path = out / f"{_stem(config, f'kernel_n{config.n}')}.csv"
    write_csv(path, cols, [[r[c] for c in cols] for r in rows])
    manifest.outputs.append(str(path))
    manifest.check("positivity", all(r["min_kappa"] > 0 for r in rows))
    ratio = max(r["envelope_ratio"] for r in rows)
    manifest.check("envelope_ratio", ratio <= tol["kernel_envelope_ratio"], value=ratio,
                   threshold=tol["kernel_envelope_ratio"])
    smax = max(r["S_max"] for r in rows)
    manifest.check("row_sum_below_one", smax < 1.0, value=smax)
    gap = max(r["S_minus_F_max"] for r in rows)
    manifest.check("row_sum_vs_F", gap <= tol["kernel_F_margin"], value=gap,
                   threshold=tol["kernel_F_margin"])


def _predict_member(config: ExperimentConfig):
    snap = next(iterate_coupled(config.with_(t_final=0.0)))
    left, right = predict_gap_splits(snap.cfg, snap.state.u, snap.hu)
    E = error_vector(snap.cfg, snap.state.u)
    density_gap = E.gaps - E.entries
    resid = float(np.abs((snap.y_gap - snap.cfg.roots) - left).max())
    split_err = float(np.abs(left + right - density_gap).max())
    return config.n, resid, split_err


def _predict_check(config, out: Path, manifest: RunManifest, workers: int):
    tol = config.tolerances
    members = [config.with_(n=n) for n in config.sweep_ns]
    res = sorted(_map(_predict_member, members, workers))
    path = out / f"{_stem(config, 'predict')}.csv"
    write_csv(path, ["n", "pred_resid_max", "split_sum_err"], [list(r) for r in res])
    manifest.outputs.append(str(path))
    ns = [r[0] for r in res]
    slope, r2 = fit_loglinear(ns, [r[1] for r in res], "power")
    manifest.summary["pred_resid_slope"] = {"slope": slope, "r2": r2}
    manifest.check("pred_resid_slope", slope <= tol["sweep_pred_slope"], value=slope,
                   threshold=tol["sweep_pred_slope"])
    err = max(r[2] for r in res)
    manifest.check("split_sum", err <= tol["split_sum"], value=err, threshold=tol["split_sum"])


_RUNNERS = {
    "pde-run": _pde_run,
    "roots-run": _roots_run,
    "coupled-run": _coupled_run,
    "scaling-sweep": _scaling_sweep,
    "kernel-check": _kernel_check,
    "predict-check": _predict_check,
}


def run_suite(subcommand: str, config: ExperimentConfig, out_dir=".", workers: int = 1) -> RunManifest:
    """Execute one subcommand, write its outputs and manifest, and return the manifest."""
    if subcommand not in _RUNNERS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        subcommand=subcommand,
        config=config_echo(config),
        versions={
            "rootflow": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        seed=config.seed,
    )
    t0 = time.perf_counter()
    try:
        _RUNNERS[subcommand](config, out, manifest, workers)
    except RootflowError as exc:
        manifest.error = f"{type(exc).__name__}: {exc}"
        manifest.exit_status = EXIT_ABORT
        log.error("engine abort: %s", exc)
    else:
        manifest.exit_status = EXIT_OK if manifest.passed else EXIT_CHECK
    manifest.timings[subcommand] = time.perf_counter() - t0
    path = out / f"{subcommand}_manifest.json"
    manifest.outputs.append(str(path))
    with open(path, "w") as fh:
        json.dump(asdict(manifest), fh, indent=2, default=_json_default)
    return manifest


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rootflow", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="JSON experiment configuration")
    p.add_argument("--out", default=".", help="output directory (default: .)")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel workers for sweeps (env ROOTFLOW_WORKERS, default 1)")
    p.add_argument("--seed", type=int, default=None, help="override the perturbation seed")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    workers = args.workers
    if workers is None:
        workers = int(os.environ.get("ROOTFLOW_WORKERS", "1"))
    try:
        config = parse_config(args.config)
        if args.seed is not None:
            config = config.with_(seed=args.seed)
    except ConfigError as exc:
        print(f"rootflow: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = run_suite(args.subcommand, config, args.out, max(1, workers))
    for name, chk in manifest.checks.items():
        log.info("%s %s", "PASS" if chk["passed"] else "FAIL", name)
    if manifest.error:
        print(f"rootflow: {manifest.error}", file=sys.stderr)
    return manifest.exit_status


if __name__ == "__main__":
    sys.exit(main())
