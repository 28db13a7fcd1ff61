"""Deterministic experiment drivers.

Four studies built on the schedule optimizers, plus trajectory export:

* :func:`enumerate_exhaustive` scores every schedule inside small bounds and
  is the ground truth the search methods are checked against.
* :func:`run_sensitivity` re-optimizes the stand under a grid of interest
  rates, fixed costs, and site indices, condensing each best schedule into
  its steady-state summary.
* :func:`run_init_study` measures how reliably single-start evaluations of
  fixed reference schedules reach their best value from random
  initializations.
* :func:`run_comparison` races the genetic search against branch-and-bound
  on the same call/node budgets.

Every driver takes a seed, runs cells independently (optionally on a worker
pool), and assembles rows in a canonical order, so a fixed seed reproduces
output files byte for byte in sequential mode. Wall-clock columns are the
one deliberate exception.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from functools import partial

import numpy as np

from . import presets
from .bnb import BnbLimits, run_bnb
from .config import ModelConfig
from .dynamics import simulate, stage_cash_flow, total_basal_area
from .fitness import FitnessResult, _start_seed, evaluate_fitness
from .ga import run_ga, selection_fitness
from .reporting import write_csv
from .schedule import ScheduleBounds, ScheduleGenotype, parse_schedule
from .summary import SteadyStateSummary, extract_summary

__all__ = [
    "ENUMERATION_GUARD",
    "genotype_count",
    "iter_genotypes",
    "EnumerationResult",
    "enumerate_exhaustive",
    "CellOutcome",
    "SensitivityResult",
    "run_sensitivity",
    "run_init_study",
    "run_comparison",
    "best_fixed_interval",
    "trajectory_header",
    "trajectory_rows",
    "export_trajectory",
    "resimulate_trajectory",
    "ENUM_HEADER",
    "SITE_HEADER",
    "INIT_HEADER",
    "COMPARE_HEADER",
    "econ_header",
    "SENSITIVITY_R",
    "SENSITIVITY_CF",
    "SENSITIVITY_SITE",
    "SENSITIVITY_STATES",
]

#: refuse exhaustive enumeration beyond this many schedules
ENUMERATION_GUARD = 1_000_000

#: the grids behind the economic and site sensitivity tables
SENSITIVITY_R = (0.01, 0.02, 0.03, 0.04)
SENSITIVITY_CF = (100.0, 300.0, 500.0)
SENSITIVITY_SITE = (11.0, 15.0, 17.0)
SENSITIVITY_STATES = ("x1", "x2", "x3")

ENUM_HEADER = ["genotype", "npv_eur", "status"]
SITE_HEADER = [
    "site_index", "interval_years", "profit_per_year_eur",
    "volume_per_harvest_m3", "avg_volume_per_year_m3", "harvested_size_mm",
    "trees_before", "trees_after", "npv_keur", "status",
]
INIT_HEADER = [
    "set", "state", "schedule", "schedule_key", "repetitions", "converged",
    "best_npv_keur", "subopt_frequency", "mean_retries",
]
COMPARE_HEADER = [
    "state", "method", "npv_keur", "nlp_calls", "wall_time_s", "termination",
]


def _derive_seed(base: int, *parts) -> int:
    return _start_seed(int(base), "|".join(str(p) for p in parts), 0)


def _map_cells(fn, items, jobs: int) -> list:
    """Apply ``fn`` over ``items`` preserving order, optionally on a pool."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    chunk = max(1, len(items) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


# ---------------------------------------------------------------------------
# exhaustive enumeration


def genotype_count(bounds: ScheduleBounds) -> int:
    """Number of valid schedules inside the bounds (cycle needs a harvest)."""
    transitions = sum(2 ** L for L in range(bounds.t_min, bounds.t_max + 1))
    cycles = sum(2 ** s - 1 for s in range(bounds.s_min, bounds.s_max + 1))
    return transitions * cycles


def iter_genotypes(bounds: ScheduleBounds):
    """All valid schedules, ordered by lengths then lexicographic bits."""
    for t_len in range(bounds.t_min, bounds.t_max + 1):
        for trans in itertools.product("01", repeat=t_len):
            for s_len in range(bounds.s_min, bounds.s_max + 1):
                for cyc in itertools.product("01", repeat=s_len):
                    if "1" not in cyc:
                        continue
                    yield ScheduleGenotype("".join(trans), "".join(cyc))


@dataclasses.dataclass(eq=False)
class EnumerationResult:
    best_genotype: ScheduleGenotype
    best_result: FitnessResult
    rows: list


def _enumeration_cell(cfg: ModelConfig, key: str) -> FitnessResult:
    return evaluate_fitness(cfg, parse_schedule(key))


def enumerate_exhaustive(cfg: ModelConfig, bounds: ScheduleBounds = None,
                         jobs: int = 1) -> EnumerationResult:
    """Evaluate every schedule inside ``bounds`` and keep the best.

    The best schedule is chosen among converged evaluations only; the table
    records the value and solver status of every schedule. Refuses bounds
    spanning more than ``ENUMERATION_GUARD`` schedules.
    """
    bounds = bounds if bounds is not None else cfg.bounds
    count = genotype_count(bounds)
    if count > ENUMERATION_GUARD:
        raise ValueError(
            f"bounds span {count} schedules, beyond the enumeration guard "
            f"of {ENUMERATION_GUARD}")
    keys = [g.key() for g in iter_genotypes(bounds)]
    results = _map_cells(partial(_enumeration_cell, cfg), keys, jobs)
    rows = [
        {"genotype": key, "npv_eur": res.npv, "status": res.solver_status}
        for key, res in zip(keys, results)
    ]
    best_key, best_result = None, None
    for key, res in zip(keys, results):
        if best_result is None or \
                selection_fitness(res) > selection_fitness(best_result):
            best_key, best_result = key, res
    return EnumerationResult(parse_schedule(best_key), best_result, rows)


# ---------------------------------------------------------------------------
# sensitivity sweep


@dataclasses.dataclass(eq=False)
class CellOutcome:
    """One (economics, site, initial state) cell of the sensitivity sweep."""

    r: float
    cf: float
    site: float
    state: str
    genotype: str = None
    npv: float = math.nan
    status: str = "error"
    termination: str = ""
    nlp_calls: int = 0
    summary: SteadyStateSummary = None
    error: str = None


@dataclasses.dataclass(eq=False)
class SensitivityResult:
    econ_rows: list
    site_rows: list
    cells: dict


def econ_header(states=SENSITIVITY_STATES) -> list:
    head = [
        "cf_eur", "r", "interval_years", "profit_per_year_eur",
        "volume_per_harvest_m3", "avg_volume_per_year_m3",
        "harvested_size_mm",
    ]
    head += [f"reached_{state}_stages" for state in states]
    head += ["trees_before", "trees_after"]
    head += [f"npv_{state}_keur" for state in states]
    head.append("status")
    return head


def _cell_config(cfg: ModelConfig, r: float, cf: float, site: float,
                 state: str, seed: int, ga_budget) -> ModelConfig:
    ga = dataclasses.replace(cfg.ga, seed=seed)
    if ga_budget is not None:
        ga = dataclasses.replace(ga, nlp_call_budget=int(ga_budget))
    return dataclasses.replace(
        cfg,
        econ=dataclasses.replace(cfg.econ, r=r, Cf=cf),
        growth=dataclasses.replace(cfg.growth, site_index=site),
        initial_state=np.asarray(presets.INITIAL_STATES[state], dtype=float),
        ga=ga,
    )


def _sensitivity_cell(cfg: ModelConfig, base_seed: int, ga_budget,
                      spec) -> CellOutcome:
    r, cf, site, state = spec
    out = CellOutcome(r=r, cf=cf, site=site, state=state)
    seed = _derive_seed(base_seed, "sens", r, cf, site, state)
    try:
        cell_cfg = _cell_config(cfg, r, cf, site, state, seed, ga_budget)
        ga_out = run_ga(cell_cfg)
        best = ga_out.best_result
        out.genotype = ga_out.best_genotype.key()
        out.npv = best.npv
        out.status = best.solver_status
        out.termination = ga_out.termination
        out.nlp_calls = ga_out.nlp_calls
        if best.solver_status == "converged":
            out.summary = extract_summary(cell_cfg, ga_out.best_genotype, best)
    except Exception as exc:  # record the failure, keep sweeping
        out.error = f"{type(exc).__name__}: {exc}"
    return out


def _summary_cells(summary: SteadyStateSummary) -> dict:
    if summary is None:
        return {
            "interval_years": None, "profit_per_year_eur": None,
            "volume_per_harvest_m3": None, "avg_volume_per_year_m3": None,
            "harvested_size_mm": None, "trees_before": None,
            "trees_after": None,
        }
    return {
        "interval_years": summary.interval_label,
        "profit_per_year_eur": summary.profit_per_year,
        "volume_per_harvest_m3": summary.volume_per_harvest,
        "avg_volume_per_year_m3": summary.avg_volume_per_year,
        "harvested_size_mm": summary.size_range_label,
        "trees_before": summary.trees_before,
        "trees_after": summary.trees_after,
    }


def _status_label(outcomes: list) -> str:
    bad = [f"{o.state}:{o.error or o.status}"
           for o in outcomes if o.error or o.status != "converged"]
    return "ok" if not bad else ";".join(bad)


def run_sensitivity(cfg: ModelConfig, r_values=SENSITIVITY_R,
                    cf_values=SENSITIVITY_CF, site_values=SENSITIVITY_SITE,
                    states=SENSITIVITY_STATES, jobs: int = 1,
                    seed: int = None, ga_budget=None) -> SensitivityResult:
    """Optimize the stand across the (Cf, r) grid and the site-index grid.

    The economic grid runs the genetic search per initial state; a row's
    steady-state columns come from the first state's best schedule, while
    the per-state columns give each state's settling time and best value.
    The site grid varies fertility at base economics for the first state
    only. Identical cells (the base case appears in both grids) are solved
    once and shared.
    """
    base_seed = seed if seed is not None else cfg.ga.seed
    base_r, base_cf = cfg.econ.r, cfg.econ.Cf
    base_site = cfg.growth.site_index

    specs = []
    for cf, r in itertools.product(cf_values, r_values):
        for state in states:
            specs.append((r, cf, base_site, state))
    for site in site_values:
        specs.append((base_r, base_cf, site, states[0]))
    unique = list(dict.fromkeys(specs))

    outcomes = _map_cells(partial(_sensitivity_cell, cfg, base_seed,
                                  ga_budget), unique, jobs)
    cells = dict(zip(unique, outcomes))

    econ_rows = []
    for cf, r in itertools.product(cf_values, r_values):
        per_state = [cells[(r, cf, base_site, state)] for state in states]
        row = {"cf_eur": cf, "r": r}
        row.update(_summary_cells(per_state[0].summary))
        for outcome in per_state:
            reached = (outcome.summary.stages_to_reach_interval
                       if outcome.summary is not None else None)
            row[f"reached_{outcome.state}_stages"] = reached
            row[f"npv_{outcome.state}_keur"] = (
                outcome.npv / 1000.0 if math.isfinite(outcome.npv) else None)
        row["status"] = _status_label(per_state)
        econ_rows.append(row)

    site_rows = []
    for site in site_values:
        outcome = cells[(base_r, base_cf, site, states[0])]
        row = {"site_index": site}
        row.update(_summary_cells(outcome.summary))
        row["npv_keur"] = (outcome.npv / 1000.0
                           if math.isfinite(outcome.npv) else None)
        row["status"] = _status_label([outcome])
        site_rows.append(row)

    return SensitivityResult(econ_rows, site_rows, cells)


# ---------------------------------------------------------------------------
# initialization-robustness study


#: values below the best by more than this relative margin count as misses
SUBOPT_MARGIN = 1e-4


def _init_cell(cfg: ModelConfig, base_seed: int, repetitions: int,
               retry_cap: int, spec) -> dict:
    (set_label, state_label), schedule_name, schedule_key = spec
    genotype = parse_schedule(schedule_key)
    state = np.asarray(presets.STUDY_STATES[(set_label, state_label)],
                       dtype=float)
    cell_cfg = dataclasses.replace(cfg, initial_state=state)
    values, retries, converged = [], [], 0
    for rep in range(repetitions):
        attempts = 0
        result = None
        while attempts <= retry_cap:
            rep_seed = _derive_seed(base_seed, "init", set_label, state_label,
                                    schedule_name, rep, attempts)
            opts = dataclasses.replace(cell_cfg.nlp, multistarts=1,
                                       seed=rep_seed)
            result = evaluate_fitness(cell_cfg, genotype, opts)
            attempts += 1
            if result.solver_status == "converged":
                break
        retries.append(attempts - 1)
        if result is not None and result.solver_status == "converged":
            converged += 1
            values.append(result.npv)
    best = max(values) if values else math.nan
    below = sum(1 for v in values
                if v < best - SUBOPT_MARGIN * abs(best))
    return {
        "set": set_label,
        "state": state_label,
        "schedule": schedule_name,
        "schedule_key": schedule_key,
        "repetitions": repetitions,
        "converged": converged,
        "best_npv_keur": best / 1000.0 if values else None,
        "subopt_frequency": below / len(values) if values else None,
        "mean_retries": float(np.mean(retries)) if retries else None,
    }


def run_init_study(cfg: ModelConfig, states=None, schedules=None,
                   repetitions: int = 100, jobs: int = 1, seed: int = None,
                   retry_cap: int = 25) -> list:
    """Single-start robustness of the fitness evaluator on fixed schedules.

    For every (state, schedule) cell, runs ``repetitions`` independent
    single-start evaluations, retrying each with a fresh seed until it
    converges (up to ``retry_cap`` retries). Reports the best value, how
    often a converged run lands more than 0.01% below it, and the mean
    number of retries needed.
    """
    base_seed = seed if seed is not None else cfg.nlp.seed
    states = states if states is not None else presets.STUDY_STATES
    schedules = schedules if schedules is not None else presets.STUDY_SCHEDULES
    specs = [
        (state_key, name, key)
        for state_key in states
        for name, key in schedules.items()
    ]
    rows = _map_cells(partial(_init_cell, cfg, base_seed, repetitions,
                              retry_cap), specs, jobs)
    rows.sort(key=lambda row: (row["set"], row["state"], row["schedule"]))
    return rows


# ---------------------------------------------------------------------------
# optimizer comparison


def run_comparison(cfg: ModelConfig, states=SENSITIVITY_STATES,
                   ga_budget: int = None, node_limit: int = 100_000,
                   call_limit: int = 0, seed: int = None) -> list:
    """Race the genetic search against branch-and-bound per initial state.

    The genetic side uses ``ga_budget`` fitness calls (configuration default
    when None); branch-and-bound runs under the node cap and the optional
    call cap. Rows report each method's best value, call count, wall time,
    and termination tag.
    """
    base_seed = seed if seed is not None else cfg.ga.seed
    rows = []
    for state in states:
        cell_seed = _derive_seed(base_seed, "compare", state)
        cell_cfg = _cell_config(cfg, cfg.econ.r, cfg.econ.Cf,
                                cfg.growth.site_index, state, cell_seed,
                                ga_budget)
        start = time.perf_counter()
        ga_out = run_ga(cell_cfg)
        ga_wall = time.perf_counter() - start
        rows.append({
            "state": state, "method": "EO",
            "npv_keur": ga_out.best_result.npv / 1000.0,
            "nlp_calls": ga_out.nlp_calls,
            "wall_time_s": round(ga_wall, 2),
            "termination": ga_out.termination,
        })
        start = time.perf_counter()
        bnb_out = run_bnb(cell_cfg,
                          limits=BnbLimits(max_active_nodes=node_limit,
                                           max_nlp_calls=call_limit),
                          seed=cell_seed)
        bnb_wall = time.perf_counter() - start
        rows.append({
            "state": state, "method": "BB",
            "npv_keur": (bnb_out.incumbent / 1000.0
                         if bnb_out.best_result is not None else None),
            "nlp_calls": bnb_out.nlp_calls,
            "wall_time_s": round(bnb_wall, 2),
            "termination": bnb_out.termination,
        })
    return rows


# ---------------------------------------------------------------------------
# fixed-interval baseline


def best_fixed_interval(cfg: ModelConfig, bounds: ScheduleBounds = None):
    """Best schedule that cuts every k-th stage from day one.

    Scans every interval k allowed by the cycle bounds and every phase
    offset, with the transition filled by the same rhythm at full length.
    Returns (genotype, result, rows) with one row per candidate.
    """
    bounds = bounds if bounds is not None else cfg.bounds
    t_len = bounds.t_max
    rows = []
    best_g, best_r = None, None
    for k in range(max(bounds.s_min, 1), bounds.s_max + 1):
        for offset in range(k):
            bits = ["1" if (t - offset) % k == 0 else "0"
                    for t in range(t_len + k)]
            genotype = ScheduleGenotype("".join(bits[:t_len]),
                                        "".join(bits[t_len:]))
            result = evaluate_fitness(cfg, genotype)
            rows.append({
                "interval_stages": k, "offset": offset,
                "genotype": genotype.key(), "npv_eur": result.npv,
                "status": result.solver_status,
            })
            if best_r is None or \
                    selection_fitness(result) > selection_fitness(best_r):
                best_g, best_r = genotype, result
    return best_g, best_r, rows


# ---------------------------------------------------------------------------
# trajectory export


def trajectory_header(n: int) -> list:
    head = ["stage", "year", "delta"]
    head += [f"x_{s}" for s in range(1, n + 1)]
    head += [f"h_{s}" for s in range(1, n + 1)]
    head += ["basal_area", "cash_flow", "discounted_cash_flow"]
    return head


def trajectory_rows(cfg: ModelConfig, deltas, trajectory, harvests) -> list:
    """Stagewise table of states, harvests, and cash flows.

    One row per state (T harvest stages give T+1 rows); the final row
    carries the terminal state with no harvest. Cash flows are exact
    (unsmoothed) and discounting follows the stage index.
    """
    table, econ = cfg.size_classes, cfg.econ
    x = np.asarray(trajectory, dtype=float)
    h = np.asarray(harvests, dtype=float)
    deltas = [int(d) for d in deltas]
    steps = h.shape[0]
    if x.shape[0] != steps + 1 or len(deltas) != steps:
        raise ValueError("trajectory, harvests, and deltas do not line up")
    rows = []
    for t in range(steps + 1):
        in_range = t < steps
        delta = deltas[t] if in_range else 0
        h_t = h[t] if in_range else np.zeros(table.n)
        cash = stage_cash_flow(h_t, delta, table, econ) if in_range else 0.0
        row = {"stage": t, "year": t * econ.delta_years, "delta": delta,
               "basal_area": total_basal_area(x[t], table),
               "cash_flow": cash,
               "discounted_cash_flow": cash * econ.stage_discount(t)}
        for s in range(table.n):
            row[f"x_{s + 1}"] = float(x[t, s])
            row[f"h_{s + 1}"] = float(h_t[s])
        rows.append(row)
    return rows


def export_trajectory(cfg: ModelConfig, result, path, deltas=None):
    """Write the stagewise trajectory of a fitness result to CSV.

    ``deltas`` are the harvest flags per stage; when omitted they are
    inferred as 1 wherever the harvest row is nonzero (which mislabels a
    flagged stage that cut nothing, so pass the schedule's flags when
    available). Returns the written path.
    """
    h = np.asarray(result.harvests, dtype=float)
    if deltas is None:
        deltas = (h.max(axis=1) > 0).astype(int)
    rows = trajectory_rows(cfg, deltas, result.trajectory, result.harvests)
    return write_csv(path, trajectory_header(cfg.size_classes.n), rows)


def resimulate_trajectory(cfg: ModelConfig, rows) -> np.ndarray:
    """Re-run the dynamics from a parsed trajectory table.

    Takes rows as written by :func:`export_trajectory` (string or numeric
    values) and returns the recomputed state trajectory; the round trip is
    exact to floating-point because the CSV keeps full precision.
    """
    n = cfg.size_classes.n
    x0 = np.array([float(rows[0][f"x_{s + 1}"]) for s in range(n)])
    harvests = []
    for row in rows[:-1]:
        h = np.array([float(row[f"h_{s + 1}"]) for s in range(n)])
        harvests.append((int(row["delta"]), h))
    return simulate(x0, harvests, cfg.size_classes, cfg.growth)
