"""Command-line entry point.

Subcommands cover the package's workflows end to end: forward simulation,
single-schedule evaluation, both optimizers, exhaustive enumeration, and the
three experiment drivers. Every run writes CSV tables plus a run-manifest
JSON into the output directory and prints a short result line; all outputs
except wall-clock columns are reproducible from the seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

import numpy as np

from .bnb import BnbLimits, run_bnb
from .config import ModelConfig, load_config
from .dynamics import InfeasibilityError, simulate
from .experiments import (
    COMPARE_HEADER,
    ENUM_HEADER,
    INIT_HEADER,
    SENSITIVITY_CF,
    SENSITIVITY_R,
    SENSITIVITY_SITE,
    SENSITIVITY_STATES,
    SITE_HEADER,
    econ_header,
    enumerate_exhaustive,
    export_trajectory,
    run_comparison,
    run_init_study,
    run_sensitivity,
    trajectory_header,
    trajectory_rows,
)
from .fitness import evaluate_fitness
from .ga import run_ga
from .reporting import write_csv, write_manifest
from .schedule import ScheduleBounds, parse_schedule
from .summary import extract_summary

SUMMARY_HEADER = [
    "genotype", "npv_keur", "status", "cycle_pattern", "interval_years",
    "profit_per_year_eur", "volume_per_harvest_m3", "avg_volume_per_year_m3",
    "harvested_size_mm", "stages_to_reach_interval", "trees_before",
    "trees_after",
]

GA_LOG_HEADER = ["generation", "best_npv_eur", "mean_npv_eur", "nlp_calls",
                 "best_genotype"]

BNB_LOG_HEADER = ["node", "parent", "t_lo", "t_hi", "s_lo", "s_hi",
                  "n_fixed", "bound", "status", "action", "incumbent",
                  "nlp_calls"]

BEST_HEADER = ["genotype", "npv_eur", "npv_keur", "status",
               "steady_residual", "nlp_calls", "termination"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="standopt",
        description="Economic optimization of uneven-aged stand management: "
                    "simulate stands, evaluate and optimize harvesting "
                    "schedules, and reproduce the standard result tables.")
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON configuration file (default: built-in "
                             "base case)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the search and solver seeds")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker processes for independent cells")
    parser.add_argument("--out", type=Path, default=Path("results"),
                        help="output directory (default: ./results)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate",
                       help="run the stand forward without harvesting")
    p.add_argument("--stages", type=int, default=20,
                   help="number of stages to simulate (default 20)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="evaluate one harvesting schedule")
    p.add_argument("--schedule", required=True, metavar='"BITS|BITS"',
                   help="transition and cycle harvest flags, e.g. "
                        "\"0010010|010\"")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("optimize", help="search for the best schedule")
    p.add_argument("method", choices=("ga", "bnb"),
                   help="genetic search or branch-and-bound")
    p.add_argument("--budget", type=int, default=None,
                   help="GA fitness-call budget (default: configuration)")
    p.add_argument("--nodes", type=int, default=100_000,
                   help="branch-and-bound active-node cap")
    p.add_argument("--calls", type=int, default=0,
                   help="branch-and-bound call cap (0 = unlimited)")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("enumerate",
                       help="score every schedule inside small bounds")
    for name in ("t-min", "t-max", "s-min", "s-max"):
        p.add_argument(f"--{name}", type=int, default=None,
                       help=f"override bounds.{name.replace('-', '_')}")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("sensitivity",
                       help="re-optimize across interest rate, fixed cost, "
                            "and site index grids")
    p.add_argument("--r", type=float, nargs="+", default=None,
                   help=f"interest rates (default {SENSITIVITY_R})")
    p.add_argument("--cf", type=float, nargs="+", default=None,
                   help=f"fixed costs (default {SENSITIVITY_CF})")
    p.add_argument("--site", type=float, nargs="+", default=None,
                   help=f"site indices (default {SENSITIVITY_SITE})")
    p.add_argument("--states", nargs="+", default=None,
                   choices=SENSITIVITY_STATES,
                   help="initial states to optimize (default all three)")
    p.add_argument("--budget", type=int, default=None,
                   help="GA fitness-call budget per cell")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("init-study",
                       help="single-start robustness study on fixed "
                            "reference schedules")
    p.add_argument("--repetitions", type=int, default=100,
                   help="repetitions per cell (default 100)")
    p.add_argument("--full", action="store_true",
                   help="full replication scale (1000 repetitions)")
    p.set_defaults(func=cmd_init_study)

    p = sub.add_parser("compare",
                       help="race the genetic search against "
                            "branch-and-bound")
    p.add_argument("--budget", type=int, default=None,
                   help="GA fitness-call budget (default: configuration)")
    p.add_argument("--nodes", type=int, default=100_000,
                   help="branch-and-bound active-node cap")
    p.add_argument("--calls", type=int, default=300,
                   help="branch-and-bound call cap at desk scale "
                        "(default 300; --full lifts it)")
    p.add_argument("--full", action="store_true",
                   help="lift the branch-and-bound call cap")
    p.set_defaults(func=cmd_compare)

    return parser


def _with_seed(cfg: ModelConfig, seed) -> ModelConfig:
    if seed is None:
        return cfg
    return dataclasses.replace(
        cfg,
        ga=dataclasses.replace(cfg.ga, seed=int(seed)),
        nlp=dataclasses.replace(cfg.nlp, seed=int(seed)),
    )


def _summary_row(cfg, genotype, result):
    row = {
        "genotype": genotype.key(),
        "npv_keur": result.npv / 1000.0,
        "status": result.solver_status,
        "cycle_pattern": None, "interval_years": None,
        "profit_per_year_eur": None, "volume_per_harvest_m3": None,
        "avg_volume_per_year_m3": None, "harvested_size_mm": None,
        "stages_to_reach_interval": None, "trees_before": None,
        "trees_after": None,
    }
    if result.solver_status == "converged":
        s = extract_summary(cfg, genotype, result)
        row.update({
            "cycle_pattern": s.cycle_pattern,
            "interval_years": s.interval_label,
            "profit_per_year_eur": s.profit_per_year,
            "volume_per_harvest_m3": s.volume_per_harvest,
            "avg_volume_per_year_m3": s.avg_volume_per_year,
            "harvested_size_mm": s.size_range_label,
            "stages_to_reach_interval": s.stages_to_reach_interval,
            "trees_before": s.trees_before,
            "trees_after": s.trees_after,
        })
    return row


def _write_best(cfg, out_dir, genotype, result, nlp_calls, termination):
    """The best-schedule row, its summary, and its trajectory."""
    outputs = []
    outputs.append(write_csv(out_dir / "best.csv", BEST_HEADER, [{
        "genotype": genotype.key(),
        "npv_eur": result.npv,
        "npv_keur": result.npv / 1000.0,
        "status": result.solver_status,
        "steady_residual": result.steady_residual,
        "nlp_calls": nlp_calls,
        "termination": termination,
    }]))
    outputs.append(write_csv(out_dir / "summary.csv", SUMMARY_HEADER,
                             [_summary_row(cfg, genotype, result)]))
    deltas = [genotype.delta_at(t) for t in range(genotype.t1)]
    outputs.append(export_trajectory(cfg, result,
                                     out_dir / "trajectory.csv",
                                     deltas=deltas))
    return outputs


def cmd_simulate(cfg, args):
    stages = int(args.stages)
    if stages < 1:
        raise ValueError("--stages must be at least 1")
    n = cfg.size_classes.n
    zero = np.zeros(n)
    harvests = [(0, zero) for _ in range(stages)]
    trajectory = simulate(cfg.initial_state, harvests,
                          cfg.size_classes, cfg.growth)
    rows = trajectory_rows(cfg, [0] * stages, trajectory,
                           np.zeros((stages, n)))
    path = write_csv(args.out / "trajectory.csv", trajectory_header(n), rows)
    print(f"simulated {stages} stages; final basal area "
          f"{rows[-1]['basal_area']:.2f} m2/ha -> {path}")
    return [path]


def cmd_evaluate(cfg, args):
    genotype = parse_schedule(args.schedule)
    result = evaluate_fitness(cfg, genotype, cfg.nlp)
    outputs = _write_best(cfg, args.out, genotype, result,
                          nlp_calls=result.restarts_used,
                          termination="")
    print(f"{genotype.key()}: npv {result.npv / 1000.0:.4f} k, "
          f"status {result.solver_status}")
    return outputs


def cmd_optimize(cfg, args):
    if args.method == "ga":
        if args.budget is not None:
            cfg = dataclasses.replace(
                cfg, ga=dataclasses.replace(cfg.ga,
                                            nlp_call_budget=int(args.budget)))
        out = run_ga(cfg)
        genotype, result = out.best_genotype, out.best_result
        outputs = _write_best(cfg, args.out, genotype, result,
                              out.nlp_calls, out.termination)
        log_rows = [{
            "generation": s.generation, "best_npv_eur": s.best_npv,
            "mean_npv_eur": s.mean_npv, "nlp_calls": s.nlp_calls,
            "best_genotype": s.best_key,
        } for s in out.log]
        outputs.append(write_csv(args.out / "ga_log.csv", GA_LOG_HEADER,
                                 log_rows))
        print(f"ga: best {genotype.key()} -> {result.npv / 1000.0:.4f} k, "
              f"{out.nlp_calls} calls, {out.termination}")
        return outputs
    limits = BnbLimits(max_active_nodes=int(args.nodes),
                       max_nlp_calls=int(args.calls))
    out = run_bnb(cfg, limits=limits)
    if out.best_result is None:
        raise ValueError(
            "branch-and-bound found no converged schedule within its "
            "limits; raise --calls or --nodes")
    genotype, result = out.best_genotype, out.best_result
    outputs = _write_best(cfg, args.out, genotype, result,
                          out.nlp_calls, out.termination)
    outputs.append(write_csv(args.out / "bnb_log.csv", BNB_LOG_HEADER,
                             out.log))
    print(f"bnb: best {genotype.key()} -> {result.npv / 1000.0:.4f} k, "
          f"{out.nlp_calls} calls, {out.termination}")
    return outputs


def cmd_enumerate(cfg, args):
    overrides = {
        "t_min": args.t_min, "t_max": args.t_max,
        "s_min": args.s_min, "s_max": args.s_max,
    }
    fields = {name: (value if value is not None
                     else getattr(cfg.bounds, name))
              for name, value in overrides.items()}
    bounds = ScheduleBounds(**fields)
    result = enumerate_exhaustive(cfg, bounds, jobs=args.jobs)
    path = write_csv(args.out / "enumeration.csv", ENUM_HEADER, result.rows,
                     sort_key=lambda row: row["genotype"])
    print(f"enumerated {len(result.rows)} schedules; best "
          f"{result.best_genotype.key()} -> "
          f"{result.best_result.npv / 1000.0:.4f} k -> {path}")
    return [path]


def cmd_sensitivity(cfg, args):
    r_values = tuple(args.r) if args.r else SENSITIVITY_R
    cf_values = tuple(args.cf) if args.cf else SENSITIVITY_CF
    site_values = tuple(args.site) if args.site else SENSITIVITY_SITE
    states = tuple(args.states) if args.states else SENSITIVITY_STATES
    result = run_sensitivity(cfg, r_values, cf_values, site_values, states,
                             jobs=args.jobs, seed=args.seed,
                             ga_budget=args.budget)
    econ_path = write_csv(args.out / "sensitivity_econ.csv",
                          econ_header(states), result.econ_rows)
    site_path = write_csv(args.out / "sensitivity_site.csv", SITE_HEADER,
                          result.site_rows)
    print(f"sensitivity: {len(result.econ_rows)} economic rows -> "
          f"{econ_path}; {len(result.site_rows)} site rows -> {site_path}")
    return [econ_path, site_path]


def cmd_init_study(cfg, args):
    repetitions = 1000 if args.full else int(args.repetitions)
    rows = run_init_study(cfg, repetitions=repetitions, jobs=args.jobs,
                          seed=args.seed)
    path = write_csv(args.out / "init_study.csv", INIT_HEADER, rows)
    print(f"init-study: {len(rows)} cells x {repetitions} repetitions "
          f"-> {path}")
    return [path]


def cmd_compare(cfg, args):
    call_limit = 0 if args.full else int(args.calls)
    rows = run_comparison(cfg, ga_budget=args.budget,
                          node_limit=int(args.nodes),
                          call_limit=call_limit, seed=args.seed)
    path = write_csv(args.out / "comparison.csv", COMPARE_HEADER, rows)
    print(f"compare: {len(rows)} rows -> {path}")
    return [path]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        cfg = _with_seed(load_config(args.config), args.seed)
        outputs = args.func(cfg, args)
    except (InfeasibilityError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    wall = time.perf_counter() - start
    manifest = write_manifest(
        args.out / "run_manifest.json", cfg, seed=args.seed,
        wall_time_s=wall, command=args.command,
        extra={"outputs": sorted(Path(p).name for p in outputs)})
    print(f"manifest -> {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
