"""Tests for steady-state summaries extracted from fitness results."""

import dataclasses
import math

import numpy as np
import pytest

from standopt.config import base_case
from standopt.dynamics import (
    cutting_cost,
    gross_revenue,
    hauling_cost,
    stock_before_harvest,
)
from standopt.fitness import FitnessResult, evaluate_fitness
from standopt.schedule import ScheduleGenotype, parse_schedule
from standopt.summary import SteadyStateSummary, extract_summary


@pytest.fixture(scope="module")
def cfg():
    return base_case()


@pytest.fixture(scope="module")
def single_cut(cfg):
    """Converged evaluation of a 13-stage transition with one cut per 3-stage
    cycle; shared by most tests below."""
    genotype = parse_schedule("0000000001000|100")
    result = evaluate_fitness(cfg, genotype)
    assert result.solver_status == "converged"
    return genotype, result


def fake_result(trajectory, harvests):
    """FitnessResult carrying only the arrays the summary reads."""
    return FitnessResult(
        npv=0.0,
        controls=np.zeros(1),
        trajectory=np.asarray(trajectory, dtype=float),
        harvests=np.asarray(harvests, dtype=float),
        steady_residual=0.0,
        solver_status="converged",
        restarts_used=1,
    )


class TestSingleHarvestCycle:
    def test_interval_is_cycle_length_times_stage_years(self, cfg, single_cut):
        genotype, result = single_cut
        s = extract_summary(cfg, genotype, result)
        assert s.primitive_period == 3
        assert s.cycle_pattern == "100"
        assert s.interval_years == genotype.s_len * cfg.econ.delta_years
        assert s.interval_label == "15"

    def test_profit_recomputed_from_harvests(self, cfg, single_cut):
        genotype, result = single_cut
        s = extract_summary(cfg, genotype, result)
        t0 = genotype.t0
        h = result.harvests[t0]
        table, econ = cfg.size_classes, cfg.econ
        cash = (
            gross_revenue(h, table, econ)
            - cutting_cost(h, table, econ)
            - hauling_cost(h, 1, table, econ)
            - econ.Cf
        )
        assert s.profit_per_year == pytest.approx(cash / 15.0, rel=1e-12)
        assert s.profit_per_year > 0

    def test_profit_ignores_reported_npv(self, cfg, single_cut):
        genotype, result = single_cut
        tampered = dataclasses.replace(result, npv=999999.0)
        assert (
            extract_summary(cfg, genotype, tampered).profit_per_year
            == extract_summary(cfg, genotype, result).profit_per_year
        )

    def test_volumes(self, cfg, single_cut):
        genotype, result = single_cut
        s = extract_summary(cfg, genotype, result)
        vol = float(result.harvests[genotype.t0] @ cfg.size_classes.v)
        assert s.volume_per_harvest == pytest.approx(vol, rel=1e-12)
        assert s.avg_volume_per_year == pytest.approx(vol / 15.0, rel=1e-12)

    def test_tree_counts_bracket_the_harvest(self, cfg, single_cut):
        """The cut happens at stage end, so the before count is the grown
        stock, not the stage-start state, and the after count is the next
        stage's opening state."""
        genotype, result = single_cut
        s = extract_summary(cfg, genotype, result)
        t0 = genotype.t0
        grown = stock_before_harvest(
            result.trajectory[t0], cfg.size_classes, cfg.growth
        )
        assert s.trees_before == pytest.approx(float(grown.sum()))
        assert s.trees_after == pytest.approx(
            s.trees_before - result.harvests[t0].sum()
        )
        assert s.trees_after == pytest.approx(
            float(result.trajectory[t0 + 1].sum()), rel=1e-9
        )
        assert s.trees_after < s.trees_before

    def test_diameter_range_covers_cut_classes(self, cfg, single_cut):
        genotype, result = single_cut
        s = extract_summary(cfg, genotype, result)
        h = result.harvests[genotype.t0]
        cut = np.flatnonzero(h > 1e-2)
        assert s.harvested_classes == tuple(cut)
        assert s.diameter_min == cfg.size_classes.d[cut[0]]
        assert s.diameter_max == cfg.size_classes.d[cut[-1]]
        lo, hi = s.size_range_label.split("-")
        assert float(lo) == s.diameter_min and float(hi) == s.diameter_max


class TestPrimitivePeriod:
    def test_doubled_cycle_reduces(self, cfg, single_cut):
        """Tiling a converged 3-stage cycle to 6 stages must be recognized
        as the same 15-year interval."""
        genotype, result = single_cut
        t0, t1 = genotype.t0, genotype.t1
        x, h = result.trajectory, result.harvests
        doubled = ScheduleGenotype(genotype.transition_bits, "100100")
        x2 = np.vstack([x[:t1], x[t0:]])
        h2 = np.vstack([h[:t1], h[t0:]])
        s = extract_summary(cfg, doubled, fake_result(x2, h2))
        base = extract_summary(cfg, genotype, result)
        assert s.primitive_period == 3
        assert s.interval_years == 15.0
        assert s.volume_per_harvest == pytest.approx(
            base.volume_per_harvest, rel=2e-3
        )
        assert s.profit_per_year == pytest.approx(base.profit_per_year, rel=2e-3)

    def test_distinct_states_block_reduction(self, cfg):
        """Matching flags alone must not shorten the period when the stand
        states differ between the repeats."""
        n = cfg.size_classes.n
        genotype = ScheduleGenotype("0", "100100")
        x = np.zeros((8, n))
        h = np.zeros((7, n))
        x[:, 4] = [500, 400, 300, 400, 310, 400, 300, 400]
        h[1, 4] = 100.0
        h[4, 4] = 90.0
        s = extract_summary(cfg, genotype, fake_result(x, h))
        assert s.primitive_period == 6

    def test_aperiodic_bits_keep_full_cycle(self, cfg):
        n = cfg.size_classes.n
        genotype = ScheduleGenotype("0", "110")
        x = np.zeros((5, n))
        x[:, 5] = 300.0
        h = np.zeros((4, n))
        h[1, 5] = 50.0
        h[2, 5] = 30.0
        s = extract_summary(cfg, genotype, fake_result(x, h))
        assert s.primitive_period == 3
        assert s.cycle_pattern == "110"


class TestMultiHarvestCycle:
    def test_gap_label_and_nan_interval(self, cfg):
        n = cfg.size_classes.n
        genotype = ScheduleGenotype("00", "1100")
        x = np.zeros((7, n))
        x[:, 6] = 250.0
        h = np.zeros((6, n))
        h[2, 6] = 40.0
        h[3, 6] = 20.0
        s = extract_summary(cfg, genotype, fake_result(x, h))
        assert math.isnan(s.interval_years)
        assert s.interval_label == "1100"
        assert s.volume_per_harvest == pytest.approx(
            30.0 * cfg.size_classes.v[6], rel=1e-12
        )

    def test_trees_taken_at_largest_harvest(self, cfg):
        """Counts must come from the stage with the larger removal (index 2,
        40 trees), grown forward to the moment of cutting."""
        n = cfg.size_classes.n
        genotype = ScheduleGenotype("00", "1100")
        x = np.zeros((7, n))
        x[:, 6] = 250.0
        x[3, 6] = 210.0
        h = np.zeros((6, n))
        h[2, 6] = 40.0
        h[3, 6] = 20.0
        s = extract_summary(cfg, genotype, fake_result(x, h))
        grown = stock_before_harvest(x[2], cfg.size_classes, cfg.growth)
        assert s.trees_before == pytest.approx(float(grown.sum()))
        assert s.trees_after == pytest.approx(float(grown.sum()) - 40.0)


class TestThresholdAndReach:
    def test_trace_harvests_not_reported(self, cfg):
        n = cfg.size_classes.n
        genotype = ScheduleGenotype("0", "1")
        x = np.zeros((3, n))
        x[:, 5] = 100.0
        h = np.zeros((2, n))
        h[1, 5] = 60.0
        h[1, 7] = 0.005
        s = extract_summary(cfg, genotype, fake_result(x, h))
        assert s.harvested_classes == (5,)
        h[1, 7] = 0.05
        s = extract_summary(cfg, genotype, fake_result(x, h))
        assert s.harvested_classes == (5, 7)

    def test_reach_counts_matching_tail(self, cfg):
        n = cfg.size_classes.n

        def reach_of(transition):
            genotype = ScheduleGenotype(transition, "010")
            t1 = genotype.t1
            x = np.zeros((t1 + 1, n))
            x[:, 5] = 100.0
            h = np.zeros((t1, n))
            for t in range(t1):
                if genotype.delta_at(t):
                    h[t, 5] = 10.0
            return extract_summary(
                cfg, genotype, fake_result(x, h)
            ).stages_to_reach_interval

        # the backward-extended cycle is ...010 010 010|010
        assert reach_of("0010010") == 0
        assert reach_of("1010010") == 1
        assert reach_of("0100110") == 5
        assert reach_of("0100100") == 6

    def test_shape_mismatch_rejected(self, cfg, single_cut):
        genotype, result = single_cut
        wrong = ScheduleGenotype(genotype.transition_bits + "0", "100")
        with pytest.raises(ValueError, match="shapes"):
            extract_summary(cfg, wrong, result)


def test_summary_is_frozen(cfg, single_cut):
    genotype, result = single_cut
    s = extract_summary(cfg, genotype, result)
    assert isinstance(s, SteadyStateSummary)
    with pytest.raises(dataclasses.FrozenInstanceError):
        s.profit_per_year = 0.0
