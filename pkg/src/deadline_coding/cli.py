"""Command-line entry point: ``deadline-coding {solve,analyze,simulate,presets}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import analysis
from .config import ConfigDocument, ConfigError, PRESETS, load_config, preset
from .dp import solve_policy
from .sim import default_workers, run_experiment

log = logging.getLogger("deadline_coding")

WHAT = ("policy", "critical", "continuous", "rate")
SWEEP_VARS = {"policy": ("mu",), "continuous": ("mu",), "rate": ("mu",), "critical": ("d", "lam", "lambda")}


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".12g")


def write_csv(header: Sequence[str], rows, out: Optional[str]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def parse_sweep(spec: str) -> tuple[str, np.ndarray]:
    """``var:lo:hi:steps`` -> (var, grid of ``steps`` evenly spaced points)."""
    parts = spec.split(":")
    if len(parts) != 4:
        raise ConfigError(f"sweep {spec!r} must look like var:lo:hi:steps")
    var = parts[0]
    try:
        lo, hi, steps = float(parts[1]), float(parts[2]), int(parts[3])
    except ValueError as exc:
        raise ConfigError(f"sweep {spec!r}: {exc}") from exc
    if steps < 1:
        raise ConfigError("sweep needs at least one step")
    if hi < lo:
        raise ConfigError("sweep upper end is below the lower end")
    return var, analysis.sweep(lo, hi, steps)


def _document(args) -> ConfigDocument:
    if args.preset and args.config:
        raise ConfigError("give either a config file or --preset, not both")
    if args.preset:
        return preset(args.preset)
    if args.config:
        return load_config(args.config)
    raise ConfigError("a config file or --preset is required")


def cmd_solve(args) -> int:
    doc = _document(args)
    if not 0.0 <= args.mu <= 1.0:
        raise ConfigError("--mu must lie in [0, 1]")
    table = solve_policy(args.mu, doc.params)
    text = json.dumps(table.to_dict(), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _policy_rows(doc: ConfigDocument, grid: np.ndarray):
    p = doc.params
    bands = analysis.policy_bands(p, grid)
    header = ["mu", "idle"] + [f"m_slot{t}" for t in range(1, p.T + 1)] + [f"x_slot{t}" for t in range(1, p.T + 1)] + ["value"]
    rows = []
    for mu, ms in zip(grid, bands):
        table = solve_policy(float(mu), p)
        xs = [int(table.x[s, p.a_max]) for s in range(p.T, 0, -1)]
        rows.append([float(mu), table.is_idle(), *[int(m) for m in ms], *xs, float(table.values[p.T, p.a_max])])
    return header, rows


def _critical_rows(doc: ConfigDocument, var: str, grid: np.ndarray):
    p = doc.params
    rows = []
    for v in grid:
        if var == "d":
            q = type(p)(p.T, float(v), p.lam, p.a_max, p.channel_cap)
        else:
            q = type(p)(p.T, p.d, float(v), p.a_max, p.channel_cap)
        zeta = analysis.critical_point(q)
        rows.append([float(v), zeta, q.d / (1.0 + q.lam), min(1.0, 2.0 * q.d / (1.0 + q.lam))])
    return [var if var != "lambda" else "lam", "zeta", "lower", "upper"], rows


def _continuous_rows(doc: ConfigDocument, grid: np.ndarray, rate_only: bool):
    p = doc.params
    a = p.a_max
    rows = []
    for mu in grid:
        opt = analysis.continuous_optimum(a, float(mu), p.d, p.lam)
        if rate_only:
            rows.append([float(mu), opt.rate])
            continue
        resid = float("nan") if opt.idle else analysis.block_length_residual(opt.m, opt.x, float(mu), p.d, p.lam)
        rows.append([float(mu), opt.idle, opt.m, opt.x, opt.rate, opt.value, resid])
    if rate_only:
        return ["mu", "rate"], rows
    return ["mu", "idle", "m1", "x1", "rate", "value", "residual"], rows


def cmd_analyze(args) -> int:
    doc = _document(args)
    what = args.what or doc.analysis.get("what")
    if what not in WHAT:
        raise ConfigError(f"--what must be one of {', '.join(WHAT)}")
    sweep = args.sweep or doc.analysis.get("sweep")
    if not sweep:
        raise ConfigError("--sweep is required (var:lo:hi:steps)")
    var, grid = parse_sweep(sweep)
    if var not in SWEEP_VARS[what]:
        raise ConfigError(f"--what {what} sweeps over {'/'.join(SWEEP_VARS[what])}, not {var!r}")
    if var == "mu" and (grid.min() < 0.0 or grid.max() > 1.0):
        raise ConfigError("mu sweep must stay inside [0, 1]")
    if what == "policy":
        header, rows = _policy_rows(doc, grid)
    elif what == "critical":
        header, rows = _critical_rows(doc, var, grid)
    else:
        header, rows = _continuous_rows(doc, grid, what == "rate")
    write_csv(header, rows, args.out)
    return 0


def _run_tag(run, multi_mu: bool, multi_learner: bool) -> str:
    parts = []
    if multi_learner:
        parts.append(run.learner.kind)
    if multi_mu:
        parts.append(f"mu{run.mu_star:g}")
    return "_".join(parts)


def cmd_simulate(args) -> int:
    doc = _document(args)
    if args.horizon is not None:
        doc.horizon = args.horizon
    if args.replications is not None:
        doc.replications = args.replications
    if args.seed is not None:
        doc.base_seed = args.seed
    runs = doc.experiments()
    workers = default_workers() if args.workers is None else args.workers
    if workers < 1:
        raise ConfigError("--workers must be at least 1")
    out = Path(args.out)
    stem = out.with_suffix("") if out.suffix == ".csv" else out
    stem.parent.mkdir(parents=True, exist_ok=True)
    multi_mu = len(doc.mu_star) > 1
    multi_learner = len(doc.learners) > 1

    summary_runs = []
    for run in runs:
        tag = _run_tag(run, multi_mu, multi_learner)
        csv_path = Path(f"{stem}_{tag}.csv") if tag else Path(f"{stem}.csv")
        log.info("simulating %s mu*=%g (%d x %d frames)", run.learner.label, run.mu_star,
                 run.replications, run.horizon)
        curve = run_experiment(run, workers=workers)
        header = ["n", "mean_cum_regret", "se_cum_regret", "mean_throughput"]
        bound = None
        bound_case = None
        if run.learner.kind == "ucb" and run.learner.beta >= 4.0:
            header.append("bound")
            try:
                setup = analysis.bound_setup(run.mu_star, run.params, run.arrivals, run.learner.beta)
                bound = analysis.bound_curve(setup, curve.n)
                bound_case = setup.case
            except analysis.UnboundedRegretBound:
                bound = np.full(curve.n.shape, math.inf)
                bound_case = "unbounded"
        cols = [curve.n, curve.mean_cum_regret, curve.se_cum_regret, curve.mean_throughput]
        if bound is not None:
            cols.append(bound)
        write_csv(header, zip(*cols), str(csv_path))
        final = {
            "n": int(curve.n[-1]),
            "mean_cum_regret": float(curve.mean_cum_regret[-1]),
            "se_cum_regret": float(curve.se_cum_regret[-1]),
            "mean_throughput": float(curve.mean_throughput[-1]),
        }
        if bound is not None:
            final["bound"] = None if math.isinf(bound[-1]) else float(bound[-1])
        summary_runs.append({
            "learner": {"kind": run.learner.kind, "beta": run.learner.beta},
            "mu_star": run.mu_star,
            "csv": csv_path.name,
            "bound_case": bound_case,
            "final": final,
        })

    summary = {
        "config": doc.to_dict(),
        "seed": doc.base_seed,
        "seed_derivation": "splitmix64(base_seed ^ splitmix64(r)) per replication r",
        "runs": summary_runs,
    }
    Path(f"{stem}.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_presets(args) -> int:
    if args.show:
        if args.show not in PRESETS:
            raise ConfigError(f"unknown preset {args.show!r}")
        sys.stdout.write(json.dumps(preset(args.show).to_dict(), indent=2) + "\n")
        return 0
    width = max(len(n) for n in PRESETS)
    for name, doc in PRESETS.items():
        p = doc["params"]
        print(f"{name:<{width}}  T={p['T']} d={p['d']:g} lambda={p['lambda']:g} a_max={p['a_max']}"
              f"  {doc['description']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deadline-coding",
                                     description="Optimal coding under deadlines and learning the channel mean.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("config", nargs="?", help="JSON config file")
        p.add_argument("--preset", help="use a named preset instead of a config file")

    p = sub.add_parser("solve", help="dump the optimal policy table for one belief as JSON")
    with_config(p)
    p.add_argument("--mu", type=float, required=True, help="channel-mean belief")
    p.add_argument("--out", help="write to this file instead of stdout")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("analyze", help="sweep a structural quantity and print CSV")
    with_config(p)
    p.add_argument("--sweep", help="var:lo:hi:steps, e.g. mu:0:1:101 or lam:0:2:21")
    p.add_argument("--what", choices=WHAT)
    p.add_argument("--out", help="write to this file instead of stdout")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="run Monte Carlo regret experiments")
    with_config(p)
    p.add_argument("--out", required=True, help="output stem; CSVs and a JSON summary are written next to it")
    p.add_argument("--workers", type=int, help="worker processes (default: $DEADLINE_CODING_WORKERS or 1)")
    p.add_argument("--horizon", type=int, help="override the number of frames")
    p.add_argument("--replications", type=int, help="override the number of replications")
    p.add_argument("--seed", type=int, help="override base_seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("presets", help="list the named presets")
    p.add_argument("--show", metavar="NAME", help="print one preset as a JSON config")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
