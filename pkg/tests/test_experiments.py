"""Experiment drivers: enumeration, sensitivity, robustness, comparison,
and trajectory export."""

import dataclasses
import math

import numpy as np
import pytest

from standopt.config import base_case
from standopt.experiments import (
    COMPARE_HEADER,
    ENUM_HEADER,
    ENUMERATION_GUARD,
    INIT_HEADER,
    SITE_HEADER,
    _cell_config,
    _derive_seed,
    best_fixed_interval,
    econ_header,
    enumerate_exhaustive,
    export_trajectory,
    genotype_count,
    iter_genotypes,
    resimulate_trajectory,
    run_comparison,
    run_init_study,
    run_sensitivity,
    trajectory_header,
    trajectory_rows,
)
from standopt.fitness import evaluate_fitness
from standopt.ga import run_ga, selection_fitness
from standopt.reporting import read_csv, write_csv
from standopt.schedule import ScheduleBounds, parse_schedule

TINY = ScheduleBounds(1, 2, 1, 2)


@pytest.fixture(scope="module")
def cfg():
    return base_case()


@pytest.fixture(scope="module")
def tiny_cfg(cfg):
    return dataclasses.replace(cfg, bounds=TINY)


@pytest.fixture(scope="module")
def tiny_enum(tiny_cfg):
    return enumerate_exhaustive(tiny_cfg)


class TestGenotypeSpace:
    def test_counts(self):
        assert genotype_count(ScheduleBounds(1, 1, 1, 1)) == 2
        assert genotype_count(TINY) == 24
        assert genotype_count(ScheduleBounds(1, 6, 1, 3)) == 1386

    def test_iteration_matches_count(self):
        keys = [g.key() for g in iter_genotypes(TINY)]
        assert len(keys) == genotype_count(TINY)
        assert len(set(keys)) == len(keys)

    def test_iteration_order(self):
        keys = [g.key() for g in iter_genotypes(TINY)]
        assert keys[:4] == ["0|1", "0|01", "0|10", "0|11"]

    def test_no_empty_cycles(self):
        assert all("1" in g.cycle_bits for g in iter_genotypes(TINY))


class TestEnumeration:
    def test_guard_refuses_default_bounds(self, cfg):
        with pytest.raises(ValueError, match="enumeration guard"):
            enumerate_exhaustive(cfg)
        assert genotype_count(cfg.bounds) > ENUMERATION_GUARD

    def test_row_shape(self, tiny_enum):
        assert len(tiny_enum.rows) == 24
        assert all(set(row) == set(ENUM_HEADER) for row in tiny_enum.rows)

    def test_best_is_converged_argmax(self, tiny_enum):
        best = max(
            (row for row in tiny_enum.rows if row["status"] == "converged"),
            key=lambda row: row["npv_eur"])
        assert tiny_enum.best_genotype.key() == best["genotype"]
        assert tiny_enum.best_result.npv == best["npv_eur"]

    def test_known_optimum(self, tiny_enum):
        assert tiny_enum.best_genotype.key() == "01|01"
        assert tiny_enum.best_result.npv == pytest.approx(4287.75, abs=0.01)

    def test_matches_direct_evaluation(self, tiny_cfg, tiny_enum):
        direct = evaluate_fitness(tiny_cfg, parse_schedule("01|01"))
        assert direct.npv == pytest.approx(tiny_enum.best_result.npv,
                                           rel=1e-12)

    def test_parallel_matches_sequential(self, tiny_cfg, tiny_enum):
        parallel = enumerate_exhaustive(tiny_cfg, jobs=2)
        assert parallel.rows == tiny_enum.rows
        assert parallel.best_genotype == tiny_enum.best_genotype


class TestBestFixedInterval:
    def test_candidates_and_best(self, cfg):
        bounds = ScheduleBounds(1, 4, 1, 3)
        small = dataclasses.replace(cfg, bounds=bounds)
        genotype, result, rows = best_fixed_interval(small)
        assert len(rows) == 1 + 2 + 3
        converged = [r for r in rows if r["status"] == "converged"]
        assert converged, "no fixed-interval candidate converged"
        assert result.npv == max(r["npv_eur"] for r in converged)
        assert genotype.key() in {r["genotype"] for r in rows}

    def test_rhythm_is_periodic(self, cfg):
        bounds = ScheduleBounds(1, 4, 1, 3)
        small = dataclasses.replace(cfg, bounds=bounds)
        _, _, rows = best_fixed_interval(small)
        for row in rows:
            k, offset = row["interval_stages"], row["offset"]
            genotype = parse_schedule(row["genotype"])
            assert genotype.t_len == 4 and genotype.s_len == k
            bits = genotype.transition_bits + genotype.cycle_bits
            expected = ["1" if (t - offset) % k == 0 else "0"
                        for t in range(len(bits))]
            assert bits == "".join(expected)


@pytest.fixture(scope="module")
def single_cell(tiny_cfg):
    return run_sensitivity(tiny_cfg, r_values=(0.03,), cf_values=(300.0,),
                           site_values=(15.0,), states=("x1",), ga_budget=40)


@pytest.fixture(scope="module")
def init_rows(cfg):
    return run_init_study(cfg, states=[("A", "e")],
                          schedules={"ssd": "1001001001|001"},
                          repetitions=4, seed=11)


@pytest.fixture(scope="module")
def compare_rows(tiny_cfg):
    return run_comparison(tiny_cfg, states=("x1",), ga_budget=30,
                          node_limit=50, call_limit=40, seed=3)


class TestSensitivity:
    def test_identical_cells_solved_once(self, single_cell):
        assert len(single_cell.cells) == 1
        assert len(single_cell.econ_rows) == 1
        assert len(single_cell.site_rows) == 1

    def test_rows_share_the_cell(self, single_cell):
        econ, site = single_cell.econ_rows[0], single_cell.site_rows[0]
        assert econ["npv_x1_keur"] == site["npv_keur"]
        assert econ["interval_years"] == site["interval_years"]
        assert econ["status"] == site["status"] == "ok"

    def test_headers(self, single_cell):
        assert set(single_cell.econ_rows[0]) == set(econ_header(("x1",)))
        assert set(single_cell.site_rows[0]) == set(SITE_HEADER)

    def test_cell_reproduces_direct_run(self, tiny_cfg, single_cell):
        seed = _derive_seed(tiny_cfg.ga.seed, "sens", 0.03, 300.0, 15.0, "x1")
        cell_cfg = _cell_config(tiny_cfg, 0.03, 300.0, 15.0, "x1", seed, 40)
        direct = run_ga(cell_cfg)
        outcome = single_cell.cells[(0.03, 300.0, 15.0, "x1")]
        assert direct.best_genotype.key() == outcome.genotype
        assert direct.best_result.npv == outcome.npv

    def test_failed_cell_recorded_not_raised(self, tiny_cfg):
        out = run_sensitivity(tiny_cfg, r_values=(0.03,), cf_values=(300.0,),
                              site_values=(), states=("nope",), ga_budget=5)
        row = out.econ_rows[0]
        assert "nope:KeyError" in row["status"]
        assert row["npv_nope_keur"] is None


class TestInitStudy:
    def test_row_shape(self, init_rows):
        assert len(init_rows) == 1
        assert set(init_rows[0]) == set(INIT_HEADER)

    def test_counters(self, init_rows):
        row = init_rows[0]
        assert row["repetitions"] == 4
        assert 0 <= row["converged"] <= 4
        assert row["mean_retries"] >= 0.0
        if row["converged"]:
            assert math.isfinite(row["best_npv_keur"])
            assert 0.0 <= row["subopt_frequency"] <= 1.0

    def test_reproducible(self, cfg, init_rows):
        again = run_init_study(cfg, states=[("A", "e")],
                               schedules={"ssd": "1001001001|001"},
                               repetitions=4, seed=11)
        assert again == init_rows


class TestComparison:
    def test_two_methods_per_state(self, compare_rows):
        assert [(r["state"], r["method"]) for r in compare_rows] == [
            ("x1", "EO"), ("x1", "BB")]
        assert all(set(r) == set(COMPARE_HEADER) for r in compare_rows)

    def test_values(self, compare_rows):
        eo, bb = compare_rows
        assert math.isfinite(eo["npv_keur"])
        assert eo["termination"] in {"NCO", "GEN"}
        assert bb["termination"] in {"NOR", "NAN", "NCO"}
        assert bb["nlp_calls"] >= 1


class TestTrajectoryExport:
    def test_round_trip(self, tiny_cfg, tiny_enum, tmp_path):
        result = tiny_enum.best_result
        genotype = tiny_enum.best_genotype
        deltas = [genotype.delta_at(t) for t in range(genotype.t1)]
        path = export_trajectory(tiny_cfg, result, tmp_path / "t.csv",
                                 deltas=deltas)
        header, rows = read_csv(path)
        assert header == trajectory_header(tiny_cfg.size_classes.n)
        assert len(rows) == genotype.t1 + 1
        resim = resimulate_trajectory(tiny_cfg, rows)
        assert np.max(np.abs(resim - result.trajectory)) < 1e-9

    def test_stage_columns(self, tiny_cfg, tiny_enum, tmp_path):
        result = tiny_enum.best_result
        genotype = tiny_enum.best_genotype
        deltas = [genotype.delta_at(t) for t in range(genotype.t1)]
        path = export_trajectory(tiny_cfg, result, tmp_path / "t.csv",
                                 deltas=deltas)
        _, rows = read_csv(path)
        for t, row in enumerate(rows):
            assert int(row["stage"]) == t
            assert int(row["year"]) == t * tiny_cfg.econ.delta_years
        assert [int(r["delta"]) for r in rows[:-1]] == deltas
        last = rows[-1]
        assert int(last["delta"]) == 0
        assert float(last["cash_flow"]) == 0.0
        assert all(float(last[f"h_{s + 1}"]) == 0.0
                   for s in range(tiny_cfg.size_classes.n))

    def test_discounting_column(self, tiny_cfg, tiny_enum):
        result = tiny_enum.best_result
        genotype = tiny_enum.best_genotype
        deltas = [genotype.delta_at(t) for t in range(genotype.t1)]
        rows = trajectory_rows(tiny_cfg, deltas, result.trajectory,
                               result.harvests)
        for t, row in enumerate(rows):
            expected = row["cash_flow"] * tiny_cfg.econ.stage_discount(t)
            assert row["discounted_cash_flow"] == pytest.approx(expected,
                                                                rel=1e-12)

    def test_shape_mismatch_raises(self, tiny_cfg, tiny_enum):
        result = tiny_enum.best_result
        with pytest.raises(ValueError, match="do not line up"):
            trajectory_rows(tiny_cfg, [0], result.trajectory,
                            result.harvests)

    def test_zero_harvest_table(self, tiny_cfg):
        from standopt.dynamics import simulate, total_basal_area

        n = tiny_cfg.size_classes.n
        harvests = [(0, np.zeros(n))] * 3
        x = simulate(tiny_cfg.initial_state, harvests,
                     tiny_cfg.size_classes, tiny_cfg.growth)
        rows = trajectory_rows(tiny_cfg, [0, 0, 0], x, np.zeros((3, n)))
        assert len(rows) == 4
        assert all(row["cash_flow"] == 0.0 for row in rows)
        for t, row in enumerate(rows):
            assert row["basal_area"] == pytest.approx(
                total_basal_area(x[t], tiny_cfg.size_classes), rel=1e-12)
