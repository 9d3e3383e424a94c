"""Experiment runner.

    pullback-lab run <config.yaml> [--set key=value]...
    pullback-lab validate <config.yaml>
    pullback-lab version

Every run writes ``summary.json`` plus CSV series into the configured output
directory. Exit status: 0 if every check passes, 1 if any check fails,
2 for configuration or precondition errors, 3 for solver blow-up.

CSV columns per experiment kind:

    energy_audit        energy_<i>_<j>.csv: h, normH2, normV2, dual_f2, weighted_integral, energy_margin
    absorption          absorption.csv: brochette, t, tau, tau0, energy_margin, derivative_margin, passed
    pullback_decay      decay.csv: tau, semidistance, tail_bound, fitted_rate
    mpa_section         section.csv: t, cluster, size, normH, normE0, attractor_radius
    oracle_equivalence  decay.csv (as above)
    calibrate           calibration.csv: R2, R3, observed_max, holdout_max, holdout_violations,
                        holdout_count, safety, rigorous_R3
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from .attractor import (
    AbsorptionEstimate,
    PreconditionError,
    calibrate_constants,
    check_absorption,
    estimate_mpa_section,
    grid_aligned_tau,
    pullback_decay,
)
from .brochettes import sample_ensemble
from .config import (
    ConfigError,
    ExperimentConfig,
    load_raw,
    parse_config,
    validation_report,
)
from .navier_stokes import BlowUpError, SolverConfig, check_energy_inequality, integrate, ns_solver
from .oracle import OracleSystem, verify_process_equivalence
from .spaces import norm_E0, norm_H
from .trajectories import save_snapshot

log = logging.getLogger(__name__)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2, 3


def package_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _check(name: str, passed: bool, margin: float, tolerance: float) -> dict:
    return {"name": name, "pass": bool(passed), "margin": float(margin),
            "tolerance": float(tolerance)}


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


class _Output:
    """Single writer for every artifact of one run."""

    def __init__(self, root: Path):
        self.root = root
        self.series: list[str] = []
        self.snapshots: list[str] = []
        root.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, header, rows) -> None:
        with open(self.root / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(x) for x in row])
        self.series.append(name)

    def register(self, name: str) -> None:
        self.series.append(name)

    def snapshot(self, name: str, traj) -> None:
        (self.root / "snapshots").mkdir(exist_ok=True)
        rel = f"snapshots/{name}.npz"
        save_snapshot(traj, self.root / rel)
        self.snapshots.append(rel)


def _solver_config(cfg: ExperimentConfig) -> SolverConfig:
    num = cfg.raw["numerics"]
    return SolverConfig(cfg.domain, M=float(num["M"]), dt=float(num["dt"]),
                        forcing=cfg.forcing, dealias=bool(num["dealias"]))


def _ensemble_args(cfg: ExperimentConfig) -> tuple[int, int, float]:
    e = cfg.raw["ensemble"]
    return int(e["count"]), int(e["seed"]), float(e.get("slope", 0.0))


def _oracle(cfg: ExperimentConfig) -> OracleSystem:
    try:
        return OracleSystem(cfg.forcing)
    except ValueError as exc:
        raise ConfigError("forcing", f"oracle system: {exc}") from None


def _system_solver(cfg: ExperimentConfig, dt: float):
    system = cfg.raw["system"]
    if system == "oracle":
        return _oracle(cfg).solver(dt)
    if system == "navier_stokes":
        return ns_solver(_solver_config(cfg), int(cfg.raw["numerics"]["record_every"]))
    raise ConfigError("system", f"expected 'oracle' or 'navier_stokes', got {system!r}")


def _tau_deep(cfg: ExperimentConfig, t: float, dt: float) -> float:
    """Configured ``tau_deep``, or one deep enough that the decaying transient
    ``r_D exp(-sigma (t - tau))`` falls a decade below ``cluster_tol``."""
    if cfg.raw.get("tau_deep") is not None:
        return float(cfg.raw["tau_deep"])
    sigma = cfg.domain.sigma
    tol = float(cfg.raw["cluster_tol"])
    deepest = min(AbsorptionEstimate(cfg.forcing, D).tau0(t) for D in cfg.brochettes.values())
    burn = 5.0 / sigma
    for _ in range(50):
        rho = max(float(D(deepest - burn)) for D in cfg.brochettes.values())
        need = max(5.0 / sigma, math.log(10.0 * rho / tol) / sigma)
        if need <= burn:
            break
        burn = need
    return grid_aligned_tau(deepest - burn, t, dt)


# experiments ---------------------------------------------------------------

def run_energy_audit(cfg: ExperimentConfig, out: _Output) -> list[dict]:
    scfg = _solver_config(cfg)
    count, seed, slope = _ensemble_args(cfg)
    h_max = float(cfg.raw["numerics"]["h_max"])
    every = int(cfg.raw["numerics"]["record_every"])
    tol = float(cfg.raw["tolerances"]["energy_C"]) * scfg.dt
    zero_data = bool(cfg.raw["ensemble"].get("zero_data", False))
    D = next(iter(cfg.brochettes.values()))
    checks = []
    for i, t in enumerate(cfg.anchor_times):
        ens = sample_ensemble(cfg.domain, D, t, count, seed, slope)
        states = [cfg.domain.zeros()] if zero_data else ens.initial_states
        worst = math.inf
        for j, a in enumerate(states):
            traj, ledger = integrate(a, t, h_max, scfg, every)
            name = f"energy_{i}_{j}.csv"
            ledger.write_csv(out.root / name)
            out.register(name)
            if cfg.raw["snapshots"]:
                out.snapshot(f"energy_{i}_{j}", traj)
            worst = min(worst, check_energy_inequality(traj, ledger, tol).min_margin)
        checks.append(_check(f"energy_inequality[t={t:g}]", worst >= -tol, worst, tol))
    return checks


def _constants(cfg: ExperimentConfig) -> tuple[float, float]:
    given = cfg.raw.get("constants")
    if given:
        return float(given["R2"]), float(given["R3"])
    c = cfg.raw["calibration"]
    cal = calibrate_constants(cfg.domain, int(c["sample_count"]), int(c["seed"]),
                              holdout_count=0, safety=float(c["safety"]))
    return cal.R2, cal.R3


def run_absorption(cfg: ExperimentConfig, out: _Output) -> list[dict]:
    scfg = _solver_config(cfg)
    dt = scfg.dt
    count, seed, slope = _ensemble_args(cfg)
    tolerances = cfg.raw["tolerances"]
    tol = float(tolerances["absorption_abs"]) + float(tolerances["absorption_C"]) * dt
    window = float(cfg.raw["h_window"])
    R2, R3 = _constants(cfg)
    solver = ns_solver(scfg)
    rows, checks = [], []
    for name, D in cfg.brochettes.items():
        est = AbsorptionEstimate(cfg.forcing, D, R2, R3)
        for t in cfg.anchor_times:
            tau0 = est.tau0(t)
            if cfg.taus is not None:
                taus = cfg.taus
            else:
                taus = [grid_aligned_tau(tau0 + off, t, dt) for off in cfg.raw["tau_offsets"]]
            for tau in taus:
                if tau > tau0:
                    raise PreconditionError(
                        f"brochettes.{name}: tau = {tau:.6g} exceeds tau0(D, {t:.6g}) = {tau0:.6g}")
                ens = sample_ensemble(cfg.domain, D, tau, count, seed, slope, solver=solver,
                                      h_max=t - tau + window)
                r = check_absorption(ens, t, est, scfg, window, tol)
                rows.append((name, t, tau, tau0, r.energy_margin, r.derivative_margin, r.passed))
                margin = min(r.energy_margin, r.derivative_margin)
                checks.append(_check(f"absorption[{name},t={t:g},tau={tau:.6g}]",
                                     r.passed, margin, tol))
    out.csv("absorption.csv", ["brochette", "t", "tau", "tau0", "energy_margin",
                               "derivative_margin", "passed"], rows)
    return checks


def _write_decay(out: _Output, curve) -> None:
    out.csv("decay.csv", ["tau", "semidistance", "tail_bound", "fitted_rate"], curve.rows())


def run_pullback_decay(cfg: ExperimentConfig, out: _Output) -> list[dict]:
    if cfg.taus is None:
        raise ConfigError("taus", "pullback_decay needs a list of tau values")
    t = cfg.anchor_times[0]
    dt = cfg.dt
    count, seed, _ = _ensemble_args(cfg)
    D = next(iter(cfg.brochettes.values()))
    if cfg.raw["system"] == "oracle":
        target = [_oracle(cfg).exact_attractor(t)]
        solver = _oracle(cfg).solver(dt)
    else:
        solver = _system_solver(cfg, dt)
        est = estimate_mpa_section(list(cfg.brochettes.values()), t, _tau_deep(cfg, t, dt),
                                   float(cfg.raw["cluster_tol"]), cfg.forcing, solver,
                                   count=count, seed=seed)
        target = est.points
    curve = pullback_decay(D, t, cfg.taus, target, solver, cfg.domain, "section",
                           count, seed)
    _write_decay(out, curve)
    checks = [_check("attraction_rate_positive", curve.rate > 0, curve.rate, 0.0)]
    if cfg.raw["system"] == "oracle":
        tol = float(cfg.raw["tolerances"]["rate"])
        err = abs(curve.rate - cfg.domain.sigma) / cfg.domain.sigma
        checks.append(_check("decay_rate", err <= tol, tol - err, tol))
    return checks


def run_mpa_section(cfg: ExperimentConfig, out: _Output) -> list[dict]:
    dt = cfg.dt
    count, seed, _ = _ensemble_args(cfg)
    cluster_tol = float(cfg.raw["cluster_tol"])
    rows, checks = [], []
    for t in cfg.anchor_times:
        tau_deep = _tau_deep(cfg, t, dt)
        step = t - tau_deep if cfg.raw["system"] == "oracle" else dt
        solver = _system_solver(cfg, step)
        est = estimate_mpa_section(list(cfg.brochettes.values()), t, tau_deep, cluster_tol,
                                   cfg.forcing, solver, count=count, seed=seed)
        r_A = AbsorptionEstimate(cfg.forcing, next(iter(cfg.brochettes.values()))).attractor_radius(t)
        worst = math.inf
        for n, (p, size) in enumerate(zip(est.points, est.sizes)):
            h = norm_H(p)
            worst = min(worst, r_A - h)
            rows.append((t, n, size, h, norm_E0(p), r_A))
        checks.append(_check(f"mpa_in_D[t={t:g}]", worst >= 0, worst, 0.0))
        if cfg.raw["system"] == "oracle":
            tol = float(cfg.raw["tolerances"]["center"])
            exact = _oracle(cfg).exact_attractor(t)
            err = max(norm_H(p - exact) for p in est.points)
            checks.append(_check(f"single_cluster[t={t:g}]", len(est.points) == 1,
                                 1 - len(est.points), 0))
            checks.append(_check(f"cluster_center[t={t:g}]", err <= tol, tol - err, tol))
    out.csv("section.csv", ["t", "cluster", "size", "normH", "normE0", "attractor_radius"], rows)
    return checks


def run_oracle_equivalence(cfg: ExperimentConfig, out: _Output) -> list[dict]:
    oracle = _oracle(cfg)
    t = cfg.anchor_times[0]
    tau_deep = cfg.raw.get("tau_deep")
    tau_deep = t - 40.0 / cfg.domain.sigma if tau_deep is None else float(tau_deep)
    count, seed, _ = _ensemble_args(cfg)
    tol = cfg.raw["tolerances"]
    rep = verify_process_equivalence(
        oracle, list(cfg.brochettes.values()), t, tau_deep,
        cluster_tol=float(cfg.raw["cluster_tol"]), count=count, seed=seed,
        rate_taus=cfg.taus,
    )
    _write_decay(out, rep.curve)
    checks = rep.checks(float(tol["center"]), float(tol["invariance"]), float(tol["rate"]))
    return [_check(c["name"], c["pass"], c["margin"], c["tolerance"]) for c in checks]


def run_calibrate(cfg: ExperimentConfig, out: _Output) -> list[dict]:
    c = cfg.raw["calibration"]
    cal = calibrate_constants(cfg.domain, int(c["sample_count"]), int(c["seed"]),
                              holdout_count=int(c["holdout_count"]), safety=float(c["safety"]))
    out.csv("calibration.csv",
            ["R2", "R3", "observed_max", "holdout_max", "holdout_violations",
             "holdout_count", "safety", "rigorous_R3"],
            [(cal.R2, cal.R3, cal.observed_max, cal.holdout_max, cal.holdout_violations,
              cal.holdout_count, cal.safety, cal.rigorous_R3)])
    return [
        _check("holdout_violations", cal.holdout_violations == 0, -cal.holdout_violations, 0),
        _check("R3_below_sobolev_bound", cal.R3 <= cal.rigorous_R3,
               cal.rigorous_R3 - cal.R3, 0.0),
    ]


RUNNERS = {
    "energy_audit": run_energy_audit,
    "absorption": run_absorption,
    "pullback_decay": run_pullback_decay,
    "mpa_section": run_mpa_section,
    "oracle_equivalence": run_oracle_equivalence,
    "calibrate": run_calibrate,
}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def run(config_path, overrides=(), stream=None) -> int:
    stream = stream or sys.stdout
    path = Path(config_path)
    try:
        raw = load_raw(path, overrides)
        cfg = parse_config(raw, path.parent)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = _Output(cfg.output_dir)
    summary = {"experiment": cfg.experiment, "config_echo": _jsonable(cfg.raw),
               "checks": [], "series_files": out.series, "snapshot_files": out.snapshots,
               "complete": False,
               "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat()}
    status = EXIT_OK
    try:
        summary["checks"] = RUNNERS[cfg.experiment](cfg, out)
        summary["complete"] = True
        if not all(c["pass"] for c in summary["checks"]):
            status = EXIT_FAIL
    except (ConfigError, PreconditionError) as exc:
        summary["error"] = f"{type(exc).__name__}: {exc}"
        status = EXIT_CONFIG
    except BlowUpError as exc:
        summary["error"] = f"BlowUpError at t = {exc.time:.6g}: {exc}"
        status = EXIT_BLOWUP
    (cfg.output_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    for c in summary["checks"]:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}  margin={c['margin']:.6g}  "
              f"tol={c['tolerance']:.6g}", file=stream)
    if "error" in summary:
        print(f"error: {summary['error']}", file=sys.stderr)
    return status


def validate(config_path, stream=None) -> int:
    stream = stream or sys.stdout
    try:
        raw = load_raw(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rows = validation_report(raw)
    for name, ok, detail in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}", file=stream)
    return EXIT_OK if all(ok for _, ok, _ in rows) else EXIT_FAIL


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pullback-lab",
                                     description="Pullback-attractor experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment declared in a config file")
    p_run.add_argument("config")
    p_run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field, e.g. numerics.dt=0.005")
    p_val = sub.add_parser("validate", help="static checks of a config file")
    p_val.add_argument("config")
    sub.add_parser("version", help="print the package version")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return run(args.config, args.set)
    if args.command == "validate":
        return validate(args.config)
    print(package_version())
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
