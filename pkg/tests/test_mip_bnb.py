"""Joint timing program: bounds, relaxation, and the tree search."""

import math

import numpy as np
import pytest

from standopt.bnb import BnbLimits, run_bnb, _split
from standopt.config import base_case, config_from_dict
from standopt.dynamics import simulate
from standopt.fitness import SolverOptions, evaluate_fitness
from standopt.mip import (BranchNode, MipStructure, cash_upper_bound,
                          node_for_genotype, root_node, solve_relaxation,
                          state_upper_bound)
from standopt.schedule import ScheduleBounds, ScheduleGenotype, parse_schedule


@pytest.fixture(scope="module")
def cfg():
    return base_case()


@pytest.fixture(scope="module")
def struct(cfg):
    return MipStructure(cfg, ScheduleBounds(1, 6, 1, 3))


class TestBounds:
    def test_state_cap_dominates_unharvested_run(self, cfg):
        x_bar = state_upper_bound(cfg)
        empty = np.zeros(12)
        traj = simulate(cfg.initial_state, [(0, empty)] * 60,
                        cfg.size_classes, cfg.growth)
        assert np.all(traj <= x_bar[None, :] + 1e-9)
        # the cap is twice the componentwise peak, so halving it still covers
        assert np.all(traj.max(axis=0) <= x_bar / 2.0 + 1e-9)

    def test_state_cap_includes_initial_state(self, cfg):
        dense = config_from_dict({"initial_state": [4000.0] + [0.0] * 11})
        x_bar = state_upper_bound(dense)
        assert x_bar[0] >= 2.0 * 4000.0 - 1e-9

    def test_cash_cap_dominates_stage_cash(self, cfg):
        from standopt.dynamics import stage_cash_flow
        x_bar = state_upper_bound(cfg)
        F_bar = cash_upper_bound(cfg, x_bar)
        # clear-cutting the cap state is the worst case either way
        assert abs(stage_cash_flow(x_bar, 1, cfg.size_classes, cfg.econ)) < F_bar
        assert abs(stage_cash_flow(np.zeros(12), 1, cfg.size_classes,
                                   cfg.econ)) < F_bar


class TestBranchNode:
    def test_root_spans_bounds(self):
        node = root_node(ScheduleBounds(10, 25, 1, 10))
        assert (node.t_lo, node.t_hi, node.s_lo, node.s_hi) == (10, 25, 1, 10)
        assert node.horizon == 35
        assert not node.fully_fixed

    def test_invalid_ranges_rejected(self):
        with pytest.raises(ValueError):
            BranchNode(3, 2, 1, 1)
        with pytest.raises(ValueError):
            BranchNode(0, 2, 1, 1)

    def test_fully_fixed_round_trip(self):
        g = parse_schedule("0100|10")
        node = node_for_genotype(g)
        assert node.fully_fixed
        assert node.genotype() == g
        assert node.horizon == g.t1

    def test_partial_fix_is_not_fully_fixed(self):
        node = BranchNode(2, 2, 1, 1, ((0, 1),))
        assert not node.fully_fixed

    def test_midpoint_split_of_standard_range(self, struct):
        node = BranchNode(10, 25, 1, 10)
        relax = None
        children, action = _split(node, relax, None)
        assert action == "branch-t"
        assert [(c.t_lo, c.t_hi) for c in children] == [(10, 17), (18, 25)]

    def test_length_split_after_start_is_resolved(self):
        node = BranchNode(4, 4, 1, 10)
        children, action = _split(node, None, None)
        assert action == "branch-s"
        assert [(c.s_lo, c.s_hi) for c in children] == [(1, 5), (6, 10)]


class TestRelaxation:
    def test_fixed_node_matches_fitness(self, cfg):
        struct = MipStructure(cfg)
        g = parse_schedule("001|100")
        relax, prob = solve_relaxation(struct, node_for_genotype(g),
                                       SolverOptions(), seed=3)
        direct = evaluate_fitness(cfg, g)
        assert relax.status == "converged"
        assert direct.solver_status == "converged"
        rel = abs(relax.value - direct.npv) / max(1.0, abs(direct.npv))
        assert rel < 1e-3
        assignment = prob.assignment(relax.z)
        assert assignment.integral
        assert assignment.genotype == g

    def test_gradient_matches_finite_differences(self, struct):
        prob = struct.problem(root_node(struct.bounds), smoothing=1e-8)
        rng = np.random.default_rng(7)
        z = np.where(prob.upper > prob.lower,
                     prob.lower + (0.2 + 0.6 * rng.random(prob.layout.size))
                     * (prob.upper - prob.lower), prob.lower)
        lam = rng.normal(size=prob.n_eq)
        mu_in = np.abs(rng.normal(size=prob.n_in))
        _, grad = prob.lagrangian(z, lam, mu_in, 2.5)
        h = 1e-6
        for i in rng.choice(prob.layout.size, size=25, replace=False):
            zp, zm = z.copy(), z.copy()
            zp[i] += h
            zm[i] -= h
            fp, _ = prob.lagrangian(zp, lam, mu_in, 2.5)
            fm, _ = prob.lagrangian(zm, lam, mu_in, 2.5)
            fd = (fp - fm) / (2 * h)
            assert abs(fd - grad[i]) <= 1e-5 * max(1.0, abs(fd))

    def test_relaxed_value_bounds_contained_schedules(self, cfg):
        """A converged node bound must not undercut any schedule inside it."""
        struct = MipStructure(cfg, ScheduleBounds(1, 4, 1, 2))
        node = BranchNode(3, 3, 2, 2)
        relax, _ = solve_relaxation(struct, node, SolverOptions(), seed=1)
        assert relax.status == "converged"
        best = -math.inf
        for bits in ("000|10", "000|01", "000|11", "100|10", "010|11",
                     "111|11", "001|01"):
            r = evaluate_fitness(cfg, parse_schedule(bits))
            if r.solver_status == "converged":
                best = max(best, r.npv)
        assert relax.value >= best - 1e-3 * abs(best)

    def test_unresolved_root_is_flagged_not_trusted(self, struct):
        relax, _ = solve_relaxation(struct, root_node(struct.bounds),
                                    SolverOptions(), seed=0)
        # fractional timing lets cash count in both windows, so the solve
        # must not report a converged (prunable) bound here
        assert relax.status in ("feasible", "failed")

    def test_assignment_reads_fixed_flags(self, cfg):
        struct = MipStructure(cfg)
        g = parse_schedule("01|10")
        relax, prob = solve_relaxation(struct, node_for_genotype(g),
                                       SolverOptions(), seed=5)
        a = prob.assignment(relax.z)
        assert a.integral and a.t0 == 2 and a.t1 == 4
        assert a.genotype == g

    def test_empty_cycle_assignment_flagged(self, cfg):
        struct = MipStructure(cfg)
        node = BranchNode(2, 2, 1, 1, ((0, 0), (1, 0), (2, 0)))
        relax, prob = solve_relaxation(struct, node, SolverOptions(), seed=2)
        a = prob.assignment(relax.z)
        assert a.integral and a.empty_cycle and a.genotype is None


class TestLeafConsistency:
    def test_random_genotype_leaves_match_fitness(self, cfg):
        """Program value and direct evaluation agree on random schedules."""
        rng = np.random.default_rng(42)
        struct = MipStructure(cfg)
        checked = 0
        for _ in range(12):
            t_len = int(rng.integers(1, 7))
            s_len = int(rng.integers(1, 4))
            trans = "".join(rng.choice(["0", "1"], size=t_len))
            cycle = "".join(rng.choice(["0", "1"], size=s_len))
            if "1" not in cycle:
                cycle = "1" + cycle[1:]
            g = ScheduleGenotype(trans, cycle)
            direct = evaluate_fitness(cfg, g)
            relax, _ = solve_relaxation(struct, node_for_genotype(g),
                                        SolverOptions(), seed=int(rng.integers(1 << 16)))
            if direct.solver_status != "converged" or relax.status != "converged":
                continue
            checked += 1
            rel = abs(relax.value - direct.npv) / max(1.0, abs(direct.npv))
            assert rel < 1e-3, f"{g}: {relax.value} vs {direct.npv}"
        assert checked >= 8


@pytest.fixture(scope="module")
def tiny_result(cfg):
    return run_bnb(cfg, bounds=ScheduleBounds(1, 2, 1, 2), seed=0)


class TestBnbSearch:
    def test_finds_enumeration_optimum(self, cfg, tiny_result):
        import itertools
        best = -math.inf
        for t_len in (1, 2):
            for s_len in (1, 2):
                for tb in itertools.product("01", repeat=t_len):
                    for sb in itertools.product("01", repeat=s_len):
                        if "1" not in sb:
                            continue
                        r = evaluate_fitness(
                            cfg, ScheduleGenotype("".join(tb), "".join(sb)))
                        if r.solver_status == "converged":
                            best = max(best, r.npv)
        assert tiny_result.termination == "NOR"
        assert tiny_result.incumbent >= best - 1e-3 * abs(best)

    def test_incumbent_is_exactly_evaluated(self, cfg, tiny_result):
        again = evaluate_fitness(cfg, tiny_result.best_genotype)
        assert again.solver_status == "converged"
        assert again.npv == pytest.approx(tiny_result.incumbent, rel=1e-9)

    def test_log_and_counters_are_consistent(self, tiny_result):
        assert tiny_result.nodes_created >= tiny_result.nodes_expanded
        assert tiny_result.nlp_calls > 0
        assert tiny_result.log, "search log must not be empty"
        for row in tiny_result.log:
            assert row["t_lo"] <= row["t_hi"] and row["s_lo"] <= row["s_hi"]
            assert row["nlp_calls"] <= tiny_result.nlp_calls
        actions = {row["action"] for row in tiny_result.log}
        assert "leaf" in actions or "prune" in actions

    def test_deterministic_given_seed(self, cfg, tiny_result):
        repeat = run_bnb(cfg, bounds=ScheduleBounds(1, 2, 1, 2), seed=0)
        assert repeat.best_genotype == tiny_result.best_genotype
        assert repeat.incumbent == tiny_result.incumbent
        assert repeat.nodes_created == tiny_result.nodes_created
        assert [r["action"] for r in repeat.log] == [
            r["action"] for r in tiny_result.log]

    def test_call_budget_stops_search(self, cfg):
        res = run_bnb(cfg, bounds=ScheduleBounds(1, 2, 1, 2), seed=0,
                      limits=BnbLimits(max_nlp_calls=3))
        assert res.termination == "NCO"
        assert res.nlp_calls <= 5  # one in-flight solve may finish

    def test_node_cap_reports_nan(self, cfg):
        res = run_bnb(cfg, bounds=ScheduleBounds(1, 4, 1, 2), seed=0,
                      limits=BnbLimits(max_active_nodes=2))
        assert res.termination == "NAN"

    def test_limit_validation(self):
        with pytest.raises(ValueError):
            BnbLimits(max_active_nodes=0)
