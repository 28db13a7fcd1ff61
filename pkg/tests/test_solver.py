"""Box-constrained quasi-Newton solver tests.

scipy's L-BFGS-B serves as an independent oracle for the minimizer values;
analytic solutions cover the exactly solvable cases.
"""

import numpy as np
import pytest
from scipy.optimize import minimize as scipy_minimize

from standopt.solver import minimize_box, projected_gradient_norm


def quad_problem(n, seed, shift):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    A = A @ A.T + n * np.eye(n)
    c = rng.uniform(-shift, shift, n)

    def fg(x):
        r = A @ (x - c)
        return 0.5 * float((x - c) @ r), r

    return fg, A, c


class TestQuadratics:
    def test_interior_solution(self):
        fg, _, c = quad_problem(8, 0, 0.4)
        res = minimize_box(fg, np.zeros(8), -np.ones(8), np.ones(8), pg_tol=1e-10)
        assert res.status == "converged"
        assert np.max(np.abs(res.x - c)) < 1e-7

    def test_bound_active_matches_scipy(self):
        for seed in range(4):
            fg, _, _ = quad_problem(10, seed, 3.0)
            lb, ub = -np.ones(10), np.ones(10)
            res = minimize_box(fg, np.zeros(10), lb, ub, pg_tol=1e-8)
            ref = scipy_minimize(
                fg, np.zeros(10), jac=True, method="L-BFGS-B",
                bounds=list(zip(lb, ub)), options={"ftol": 1e-15, "gtol": 1e-12},
            )
            assert res.f <= ref.fun + 1e-7 * (1 + abs(ref.fun))

    def test_kkt_at_solution(self):
        fg, _, _ = quad_problem(12, 7, 2.0)
        lb, ub = -np.ones(12), np.ones(12)
        res = minimize_box(fg, np.zeros(12), lb, ub, pg_tol=1e-6)
        assert projected_gradient_norm(res.x, res.g, lb, ub) <= 1e-6

    def test_fixed_variables(self):
        fg, _, c = quad_problem(6, 3, 0.3)
        lb = np.array([0.5, -1, -1, -1, -1, -1.0])
        ub = np.array([0.5, 1, 1, 1, 1, 1.0])
        res = minimize_box(fg, np.zeros(6), lb, ub, pg_tol=1e-6)
        assert res.x[0] == 0.5
        assert res.status == "converged"


class TestRosenbrock:
    @staticmethod
    def fg(x):
        f = 100.0 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2
        g = np.array(
            [
                -400.0 * x[0] * (x[1] - x[0] ** 2) - 2 * (1 - x[0]),
                200.0 * (x[1] - x[0] ** 2),
            ]
        )
        return f, g

    def test_reaches_optimum_from_several_starts(self):
        lb, ub = -2 * np.ones(2), 2 * np.ones(2)
        for x0 in ([-1.2, 1.0], [0.0, 0.0], [1.9, -1.9]):
            res = minimize_box(self.fg, np.array(x0), lb, ub,
                               pg_tol=1e-8, max_iter=2000)
            assert res.f < 1e-12
            assert np.max(np.abs(res.x - 1.0)) < 1e-5

    def test_active_bound_solution(self):
        # optimum of Rosenbrock restricted to x <= 0.5 lies on the bound
        lb, ub = -2 * np.ones(2), np.array([0.5, 2.0])
        res = minimize_box(self.fg, np.zeros(2), lb, ub, pg_tol=1e-10, max_iter=2000)
        ref = scipy_minimize(
            self.fg, np.zeros(2), jac=True, method="L-BFGS-B",
            bounds=list(zip(lb, ub)), options={"ftol": 1e-15, "gtol": 1e-12},
        )
        assert res.f <= ref.fun + 1e-8 * (1 + abs(ref.fun))


class TestContract:
    def test_separate_value_callback_used(self):
        calls = {"fg": 0, "f": 0}

        def fg(x):
            calls["fg"] += 1
            return float(x @ x), 2 * x

        def f(x):
            calls["f"] += 1
            return float(x @ x)

        res = minimize_box(fg, np.full(5, 0.7), np.zeros(5), np.ones(5),
                           value=f, pg_tol=1e-12)
        assert res.status == "converged"
        assert np.max(np.abs(res.x)) < 1e-10
        assert calls["f"] >= 1

    def test_start_outside_box_is_projected(self):
        def fg(x):
            return float(x @ x), 2 * x

        res = minimize_box(fg, np.array([5.0, -7.0]), np.array([1.0, -1.0]),
                           np.array([2.0, 1.0]), pg_tol=1e-12)
        assert np.allclose(res.x, [1.0, 0.0])

    def test_eval_budget_reported(self):
        def fg(x):
            return float(x @ x), 2 * x

        res = minimize_box(fg, np.full(3, 0.9), -np.ones(3), np.ones(3))
        assert res.n_evals >= res.iterations
