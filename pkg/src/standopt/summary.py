"""Management-plan summaries derived from a converged schedule evaluation.

A schedule's fitness result carries the full state trajectory and harvest
matrix. This module condenses the repeating part of that solution into the
quantities a forest manager cares about: the harvest interval, annual profit,
removal volumes, the diameter range of cut trees, stem counts around a
harvest, and how many stages the transient takes to settle into the
steady-state rhythm.

All derived figures are recomputed from the trajectory and harvest matrix;
nothing is copied from the optimizer's internal bookkeeping.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .config import ModelConfig
from .dynamics import stage_cash_flow, stock_before_harvest
from .fitness import FitnessResult
from .schedule import ScheduleGenotype

__all__ = ["SteadyStateSummary", "extract_summary"]

# Relative inf-norm tolerance for deciding that cycle states (and harvest
# vectors) repeat with a shorter period than the genotype encodes.
STATE_MATCH_TOL = 1e-3

# Classes with fewer harvested trees per hectare than this across the whole
# cycle are treated as not harvested when reporting the diameter range.
HARVEST_TREES_EPS = 1e-2


@dataclasses.dataclass(frozen=True)
class SteadyStateSummary:
    """Condensed description of the repeating part of a harvest schedule.

    ``cycle_pattern`` is the primitive harvest-flag pattern (one character
    per stage) after removing internal repetition; ``primitive_period`` is
    its length in stages. ``interval_years`` is the time between harvests
    when the primitive cycle cuts exactly once (NaN otherwise) and
    ``interval_label`` is a printable form that falls back to the cycle
    pattern verbatim for multi-harvest cycles.

    Monetary and volume figures are undiscounted per-cycle totals divided by
    the cycle length in years. ``trees_before``/``trees_after`` are stems per
    hectare at the moment of the largest harvest of the cycle: the grown
    stock the cut removes from, and what that cut leaves standing.
    ``stages_to_reach_interval`` counts transition stages until the harvest
    flags match the cycle rhythm extended backward in time.
    """

    cycle_pattern: str
    primitive_period: int
    interval_years: float
    interval_label: str
    profit_per_year: float
    volume_per_harvest: float
    avg_volume_per_year: float
    harvested_classes: tuple[int, ...]
    diameter_min: float
    diameter_max: float
    size_range_label: str
    stages_to_reach_interval: int
    trees_before: float
    trees_after: float


def _rows_match(a: np.ndarray, b: np.ndarray) -> bool:
    scale = 1.0 + max(float(np.max(np.abs(a))), float(np.max(np.abs(b))))
    return float(np.max(np.abs(a - b))) <= STATE_MATCH_TOL * scale


def _primitive_period(genotype: ScheduleGenotype, x: np.ndarray,
                      h: np.ndarray) -> int:
    """Shortest period with which both the harvest flags and the realized
    cycle states/harvests repeat. Falls back to the full cycle length."""
    bits = genotype.cycle_bits
    s_len, t0 = genotype.s_len, genotype.t0
    for q in range(1, s_len):
        if s_len % q:
            continue
        if bits != bits[:q] * (s_len // q):
            continue
        ok = all(
            _rows_match(x[t0 + i], x[t0 + i % q])
            and _rows_match(h[t0 + i], h[t0 + i % q])
            for i in range(s_len)
        )
        if ok:
            return q
    return s_len


def _format_quantity(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return f"{value:g}"


def extract_summary(cfg: ModelConfig, genotype: ScheduleGenotype,
                    result: FitnessResult) -> SteadyStateSummary:
    """Summarize the steady-state cycle of an evaluated schedule.

    Expects ``result`` from a successful fitness evaluation of ``genotype``
    under ``cfg``: the trajectory must cover stages 0..t1 and the harvest
    matrix stages 0..t1-1, with the cycle pin satisfied to working accuracy.
    """
    table, econ = cfg.size_classes, cfg.econ
    dy = econ.delta_years
    x = np.asarray(result.trajectory, dtype=float)
    h = np.asarray(result.harvests, dtype=float)
    t0, t1 = genotype.t0, genotype.t1
    if x.shape[0] != t1 + 1 or h.shape[0] != t1:
        raise ValueError("trajectory/harvest shapes do not match the genotype")

    p = _primitive_period(genotype, x, h)
    pattern = genotype.cycle_bits[:p]
    events = [i for i in range(p) if pattern[i] == "1"]
    cycle_years = p * dy

    # Cash and volume over one primitive cycle, recomputed from scratch.
    cash = sum(
        stage_cash_flow(h[t0 + i], int(pattern[i]), table, econ)
        for i in range(p)
    )
    volumes = [float(h[t0 + i] @ table.v) for i in events]
    total_volume = float(sum(volumes))

    # Which classes are ever cut, and the matching diameter range.
    peak = np.max(h[t0:t0 + p], axis=0) if p else np.zeros(table.n)
    classes = tuple(int(s) for s in np.flatnonzero(peak > HARVEST_TREES_EPS))
    if classes:
        d_lo = float(table.d[classes[0]])
        d_hi = float(table.d[classes[-1]])
        size_label = f"{_format_quantity(d_lo)}-{_format_quantity(d_hi)}"
    else:
        d_lo = d_hi = math.nan
        size_label = ""

    # Stem counts around the largest harvest of the cycle. Cutting happens at
    # the end of a stage, so the stand walked into is the stage-start state
    # grown forward, not the stage-start state itself.
    i_star = events[int(np.argmax(volumes))] if events else 0
    grown = stock_before_harvest(x[t0 + i_star], table, cfg.growth)
    before = float(np.sum(grown))
    after = before - float(np.sum(h[t0 + i_star]))

    # Harvest interval: a single number only when the cycle cuts once; a
    # multi-harvest rhythm is reported as the flag pattern itself.
    if len(events) == 1:
        interval = float(cycle_years)
        interval_label = _format_quantity(interval)
    else:
        interval = math.nan
        interval_label = pattern

    # Extend the cycle rhythm backward over the transition and find the
    # first stage from which the schedule already follows it.
    reach = t0
    while reach > 0 and genotype.delta_at(reach - 1) == int(
            pattern[(reach - 1 - t0) % p]):
        reach -= 1

    return SteadyStateSummary(
        cycle_pattern=pattern,
        primitive_period=p,
        interval_years=interval,
        interval_label=interval_label,
        profit_per_year=cash / cycle_years,
        volume_per_harvest=total_volume / max(len(events), 1),
        avg_volume_per_year=total_volume / cycle_years,
        harvested_classes=classes,
        diameter_min=d_lo,
        diameter_max=d_hi,
        size_range_label=size_label,
        stages_to_reach_interval=reach,
        trees_before=before,
        trees_after=after,
    )
