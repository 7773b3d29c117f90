"""Command-line entry point.

Subcommands::

    netshare validate   --manifest M
    netshare solve      --manifest M [--slot S] [--strategy full-ns] ...
    netshare sweep      --manifest M --out DIR
    netshare montecarlo --manifest M [--replicates N]
    netshare fixture    --out DIR [--profile diurnal]

A manifest is either a single network model (JSON with ``operators`` and
``classes``) or a scenario manifest binding site, traffic and district CSVs
(see :mod:`netshare.scenario`).  Every flag can also be set through an
environment variable ``NETSHARE_<FLAG>``, e.g. ``NETSHARE_ENERGY_PROFILE=LLP``;
command-line flags win.

Exit codes: 0 success, 1 model or validation error, 2 I/O error,
3 infeasible result under ``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .domain import ENERGY_PROFILES, LOAD_MODELS, EnergyParams, ModelError, NetworkModel, validate_model
from .scenario import ScenarioError, diurnal_profile, load_scenario, synthetic_scenario
from .simulate import SimSpec, oracle_checks
from .strategies import STRATEGIES, SolverOptions, StrategyResult, aggregate_savings, evaluate_strategies

log = logging.getLogger("netshare")

SCHEMA_VERSION = 1
ENV_PREFIX = "NETSHARE_"
EXIT_OK, EXIT_MODEL, EXIT_IO, EXIT_INFEASIBLE = 0, 1, 2, 3

RESULT_COLUMNS = ("schema_version", "area", "day_type", "slot", "strategy", "feasible", "energy_w_per_km2",
                  "betas", "utilizations", "iterations", "kkt_residual", "reason")


class _Env:
    """Defaults drawn from NETSHARE_* environment variables."""

    def __init__(self, environ=None):
        self.env = os.environ if environ is None else environ

    def get(self, name: str, default=None):
        return self.env.get(ENV_PREFIX + name.upper().replace("-", "_"), default)

    def flag(self, name: str) -> bool:
        return str(self.get(name, "")).lower() in ("1", "true", "yes", "on")


def build_parser(environ=None) -> argparse.ArgumentParser:
    env = _Env(environ)
    p = argparse.ArgumentParser(prog="netshare", description="Energy-optimal network sharing with sleep modes.")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(environ=env.env)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_manifest=True):
        sp.add_argument("--manifest", default=env.get("manifest"), required=needs_manifest and env.get("manifest") is None)
        sp.add_argument("--out", default=env.get("out"))
        sp.add_argument("--seed", type=int, default=int(env.get("seed", 0)))
        sp.add_argument("--energy-profile", choices=ENERGY_PROFILES, default=env.get("energy-profile"),
                        help="override every operator's energy parameters with a reference profile")
        sp.add_argument("--load-model", choices=LOAD_MODELS, default=env.get("load-model"))
        sp.add_argument("--normalize-p", action="store_true", default=env.flag("normalize-p"))
        sp.add_argument("--area", default=env.get("area"), help="area kind of a scenario manifest")
        sp.add_argument("--day-type", default=env.get("day-type", "weekday"))

    sp = sub.add_parser("validate", help="check a manifest and its models")
    common(sp)

    sp = sub.add_parser("solve", help="run the strategies on one slot")
    common(sp)
    sp.add_argument("--slot", type=int, default=int(env.get("slot", 0)))
    sp.add_argument("--strategy", action="append", choices=STRATEGIES,
                    default=None, help="repeatable; default: all")
    sp.add_argument("--strict", action="store_true", default=env.flag("strict"))

    sp = sub.add_parser("sweep", help="run the strategies over every slot of a scenario")
    common(sp)
    sp.add_argument("--strategy", action="append", choices=STRATEGIES, default=None)
    sp.add_argument("--workers", type=int, default=int(env.get("workers", 1)),
                    help="worker processes across slots; output order is unaffected")
    sp.add_argument("--strict", action="store_true", default=env.flag("strict"))

    sp = sub.add_parser("montecarlo", help="check the analytical engine against simulation")
    common(sp)
    sp.add_argument("--slot", type=int, default=int(env.get("slot", 0)))
    sp.add_argument("--replicates", type=int, default=int(env.get("replicates", 200)))
    sp.add_argument("--window", type=float, default=float(env.get("window", 10_000.0)))
    sp.add_argument("--delay-tol", type=float, default=0.10)
    sp.add_argument("--interference-tol", type=float, default=0.05)
    sp.add_argument("--sigmas", type=float, default=3.0, help="standard errors added to the tolerance band")
    sp.add_argument("--campbell-realizations", type=int, default=500)

    sp = sub.add_parser("fixture", help="write a synthetic scenario")
    sp.add_argument("--out", default=env.get("out"), required=env.get("out") is None)
    sp.add_argument("--seed", type=int, default=int(env.get("seed", 0)))
    sp.add_argument("--profile", choices=("diurnal", "constant"), default="diurnal")
    sp.add_argument("--peak-to-trough", type=float, default=14.0)
    sp.add_argument("--peak-users", type=float, default=30.0, help="per operator, users/km²")
    sp.add_argument("--bs-density", type=float, default=3.0, help="per operator, BSs/km²")
    sp.add_argument("--operators", type=int, default=2)
    sp.add_argument("--side", type=float, default=10_000.0, help="square side in metres")
    sp.add_argument("--pathloss-exponent", type=float, default=4.0)
    return p


# -- loading ------------------------------------------------------------------

def _read_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON ({exc})") from exc


def _adjust(m: NetworkModel, args) -> NetworkModel:
    if args.energy_profile:
        m = m.with_energy(EnergyParams.from_profile(args.energy_profile, transmit_power=m.radio.transmit_power))
    if args.load_model:
        m = replace(m, load_model=args.load_model)
    if args.normalize_p:
        m = replace(m, normalize_serving_probs=True)
    return m


def load_models(args) -> tuple[dict, dict]:
    """Returns ``{(area, day_type): [models per slot]}`` and the raw manifest."""
    path = Path(args.manifest)
    raw = _read_json(path)
    if "operators" in raw:
        m = NetworkModel.from_dict(raw)
        return {("model", "-"): [_adjust(m, args)]}, raw
    series, _, _, raw = load_scenario(path)
    out = {k: [_adjust(m, args) for m in v] for k, v in series.models.items()}
    if args.area:
        out = {k: v for k, v in out.items() if k[0] == args.area}
        if not out:
            raise ModelError(f"no area kind {args.area!r} in scenario")
    return out, raw


def _solver_options(raw: dict) -> SolverOptions:
    cfg = raw.get("solver", {})
    allowed = {"fd_step", "starts", "barrier_init", "barrier_final", "barrier_shrink", "inner_max_iters", "grad_tol"}
    bad = set(cfg) - allowed
    if bad:
        raise ModelError(f"unknown solver options {sorted(bad)}")
    return SolverOptions(**cfg)


def _strategies(args, raw: dict) -> tuple:
    s = args.strategy or raw.get("strategies") or _Env(args.environ).get("strategy", ",".join(STRATEGIES)).split(",")
    s = tuple(s)
    if not s or set(s) - set(STRATEGIES):
        raise ModelError(f"strategies must be a non-empty subset of {STRATEGIES}")
    return s


# -- formatting ---------------------------------------------------------------

def _vec(x) -> str:
    return ";".join("nan" if not math.isfinite(v) else f"{v:.6f}" for v in np.asarray(x, dtype=float))


def result_row(area: str, day: str, slot: int, r: StrategyResult) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "area": area,
        "day_type": day,
        "slot": slot,
        "strategy": r.strategy,
        "feasible": int(r.feasible),
        "energy_w_per_km2": f"{r.energy * 1e6:.6f}" if math.isfinite(r.energy) else "nan",
        "betas": _vec(r.betas),
        "utilizations": _vec(r.utilization),
        "iterations": r.iterations,
        "kkt_residual": f"{r.kkt_residual:.3e}" if math.isfinite(r.kkt_residual) else "nan",
        "reason": r.reason,
    }


def write_csv(path: Path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def format_rows(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def savings_table(summary: dict) -> str:
    """Strategy-by-period table of percentage savings over no sharing."""
    periods = sorted(summary)
    tags = sorted({t for p in periods for t in summary[p]})
    head = ["strategy"] + [f"{a}/{d}" for a, d in periods]
    lines = [" | ".join(head)]
    for t in tags:
        cells = [t]
        for p in periods:
            pct, n = summary[p].get(t, (math.nan, 0))
            cells.append("n/a" if not math.isfinite(pct) else f"{pct:.2f} ({n} slots)")
        lines.append(" | ".join(cells))
    return "\n".join(lines)


# -- commands -----------------------------------------------------------------

def cmd_validate(args) -> int:
    models, raw = load_models(args)
    report = []
    for (area, day), series in sorted(models.items()):
        for slot, m in enumerate(series):
            for msg in validate_model(m):
                report.append({"area": area, "day_type": day, "slot": slot, "violation": msg})
    if "strategies" in raw or args.__dict__.get("strategy"):
        _strategies(args, raw)
    _solver_options(raw)
    print(json.dumps({"schema_version": SCHEMA_VERSION, "ok": not report, "violations": report}, indent=2))
    return EXIT_OK if not report else EXIT_MODEL


def _check_valid(models: dict) -> None:
    for (area, day), series in models.items():
        for slot, m in enumerate(series):
            problems = validate_model(m)
            if problems:
                raise ModelError(f"{area}/{day} slot {slot}: " + "; ".join(problems))


def cmd_solve(args) -> int:
    models, raw = load_models(args)
    _check_valid(models)
    opts = _solver_options(raw)
    strategies = _strategies(args, raw)
    rows, infeasible = [], False
    for (area, day), series in sorted(models.items()):
        if (area, day) != ("model", "-") and day != args.day_type:
            continue
        if not 0 <= args.slot < len(series):
            raise ModelError(f"slot {args.slot} out of range 0..{len(series) - 1}")
        slot = args.slot if len(series) > 1 else 0
        res = evaluate_strategies(series[slot], strategies, opts)
        for tag in strategies:
            rows.append(result_row(area, day, slot, res[tag]))
            infeasible |= not res[tag].feasible
    _emit(args, rows, "results")
    return EXIT_INFEASIBLE if (infeasible and args.strict) else EXIT_OK


def _solve_slot(job):
    m, strategies, opts = job
    try:
        return evaluate_strategies(m, strategies, opts)
    except (ModelError, ArithmeticError, RuntimeError) as exc:
        return exc


def cmd_sweep(args) -> int:
    models, raw = load_models(args)
    _check_valid(models)
    opts = _solver_options(raw)
    strategies = _strategies(args, raw)
    keys = sorted(models)
    jobs = [(m, strategies, opts) for k in keys for m in models[k]]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = iter(list(pool.map(_solve_slot, jobs)))
    else:
        results = map(_solve_slot, jobs)
    rows, summary, infeasible = [], {}, False
    for area, day in keys:
        per_slot = []
        for slot in range(len(models[(area, day)])):
            res = next(results)
            if isinstance(res, Exception):
                log.error("%s/%s slot %d failed: %s", area, day, slot, res)
                rows.append({"schema_version": SCHEMA_VERSION, "area": area, "day_type": day, "slot": slot,
                             "strategy": "invalid", "feasible": 0, "reason": str(res)})
                infeasible = True
                continue
            per_slot.append(res)
            for tag in strategies:
                rows.append(result_row(area, day, slot, res[tag]))
                infeasible |= not res[tag].feasible
        if "no-sharing" in strategies and per_slot:
            summary[(area, day)] = aggregate_savings(per_slot)
    _emit(args, rows, "series")
    if summary:
        table = savings_table(summary)
        print(table, file=sys.stderr if not args.out else sys.stdout)
        if args.out:
            out = Path(args.out)
            (out / "summary.txt").write_text(table + "\n")
            write_csv(out / "summary.csv",
                      [{"schema_version": SCHEMA_VERSION, "area": a, "day_type": d, "strategy": t,
                        "saving_percent": f"{pct:.2f}" if math.isfinite(pct) else "nan", "slots": n}
                       for (a, d), s in sorted(summary.items()) for t, (pct, n) in sorted(s.items())],
                      ("schema_version", "area", "day_type", "strategy", "saving_percent", "slots"))
    return EXIT_INFEASIBLE if (infeasible and args.strict) else EXIT_OK


def _emit(args, rows: list, stem: str) -> None:
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / f"{stem}.csv", rows, RESULT_COLUMNS)
        (out / f"{stem}.json").write_text(json.dumps({"schema_version": SCHEMA_VERSION, "rows": rows},
                                                     indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(format_rows(rows, RESULT_COLUMNS))


def cmd_montecarlo(args) -> int:
    models, raw = load_models(args)
    _check_valid(models)
    key = sorted(models)[0]
    series = models[key]
    m = series[args.slot if len(series) > 1 else 0]
    spec = SimSpec(window=args.window, replicates=args.replicates, seed=args.seed)
    checks = oracle_checks(m, spec, args.delay_tol, args.interference_tol,
                           campbell_realizations=args.campbell_realizations, n_sigma=args.sigmas)
    failed = False
    rows = []
    for c in checks:
        status = "skip" if c.estimate is None else ("report" if c.passed is None else ("pass" if c.passed else "FAIL"))
        failed |= c.passed is False
        est = c.estimate
        rows.append({"check": c.name, "status": status, "analytic": f"{c.analytic:.6e}",
                     "estimate": f"{est.mean:.6e}" if est else "nan",
                     "stderr": f"{est.stderr:.3e}" if est else "nan",
                     "rel_tol": f"{c.rel_tol:.3f}", "note": c.note})
    cols = ("check", "status", "analytic", "estimate", "stderr", "rel_tol", "note")
    text = format_rows(rows, cols)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "montecarlo.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_MODEL if failed else EXIT_OK


def cmd_fixture(args) -> int:
    profile = diurnal_profile(peak_to_trough=args.peak_to_trough) if args.profile == "diurnal" else None
    path = synthetic_scenario(args.out, operators=args.operators, side=args.side, bs_per_km2=args.bs_density,
                              peak_users_per_km2=args.peak_users, profile=profile, seed=args.seed,
                              manifest_extra={"radio": {"pathloss_exponent": args.pathloss_exponent}})
    print(path)
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "solve": cmd_solve, "sweep": cmd_sweep,
            "montecarlo": cmd_montecarlo, "fixture": cmd_fixture}


def main(argv: Optional[Sequence[str]] = None, environ=None) -> int:
    args = build_parser(environ).parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ModelError, ScenarioError, ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
