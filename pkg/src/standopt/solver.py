"""Projected limited-memory quasi-Newton minimizer for box constraints.

This is the inner engine of the augmented-Lagrangian loops in the fitness
evaluator and the relaxation solver. It maintains an L-BFGS curvature history
on the free variables, projects search directions onto the box, and uses a
backtracking Armijo line search along the projected path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_CURVATURE_GUARD = 1e-10
_DESCENT_GUARD = 1e-13


@dataclass
class BoxResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    pg_norm: float
    iterations: int
    n_evals: int
    status: str  # converged | maxiter | stalled


def projected_gradient_norm(x, g, lower, upper) -> float:
    """Max-norm of the projected gradient step x - P(x - g)."""
    return float(np.max(np.abs(x - np.clip(x - g, lower, upper))))


def _two_loop(g, s_list, y_list, rho_list):
    q = g.copy()
    alphas = np.empty(len(s_list))
    for i in range(len(s_list) - 1, -1, -1):
        alphas[i] = rho_list[i] * np.dot(s_list[i], q)
        q -= alphas[i] * y_list[i]
    s, y = s_list[-1], y_list[-1]
    q *= np.dot(s, y) / np.dot(y, y)
    for i in range(len(s_list)):
        beta = rho_list[i] * np.dot(y_list[i], q)
        q += (alphas[i] - beta) * s_list[i]
    return q


def minimize_box(
    value_grad,
    x0,
    lower,
    upper,
    *,
    value=None,
    pg_tol=1e-8,
    max_iter=500,
    memory=10,
    armijo=1e-4,
    backtracks=30,
    first_step_norm=0.25,
) -> BoxResult:
    """Minimize value_grad(x)[0] over the box [lower, upper].

    value_grad(x) -> (f, g); value(x) -> f is an optional cheaper callback for
    line-search trials. Points are always kept inside the box by projection.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    if value is None:
        value = lambda z: value_grad(z)[0]  # noqa: E731

    f, g = value_grad(x)
    n_evals = 1
    s_list, y_list, rho_list = [], [], []
    status = "maxiter"
    it = 0
    pg = projected_gradient_norm(x, g, lower, upper)

    for it in range(1, max_iter + 1):
        if pg <= pg_tol:
            status = "converged"
            it -= 1
            break

        # Freeze coordinates pinned at a bound with an inward-pointing gradient.
        at_low = x <= lower + 1e-14 * (1.0 + np.abs(lower))
        at_up = x >= upper - 1e-14 * (1.0 + np.abs(upper))
        active = (at_low & (g > 0)) | (at_up & (g < 0))
        g_free = np.where(active, 0.0, g)

        if s_list:
            d = -_two_loop(g_free, s_list, y_list, rho_list)
            d[active] = 0.0
            if np.dot(d, g) > -_DESCENT_GUARD * (1.0 + np.linalg.norm(d) * np.linalg.norm(g)):
                s_list, y_list, rho_list = [], [], []
                d = -g_free
        else:
            d = -g_free

        d_inf = np.max(np.abs(d))
        if d_inf == 0.0:
            status = "converged" if pg <= pg_tol else "stalled"
            break

        # Without curvature history, cap the first move to a sane length.
        alpha = 1.0 if s_list else min(1.0, first_step_norm / d_inf)

        accepted = False
        for _ in range(backtracks):
            x_new = np.clip(x + alpha * d, lower, upper)
            move = x_new - x
            if not np.any(move):
                break
            f_new = value(x_new)
            n_evals += 1
            if f_new <= f + armijo * np.dot(g, move):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            status = "stalled"
            break

        f_new, g_new = value_grad(x_new)
        n_evals += 1
        s = x_new - x
        y = g_new - g
        sy = np.dot(s, y)
        if sy > _CURVATURE_GUARD * np.linalg.norm(s) * np.linalg.norm(y):
            s_list.append(s)
            y_list.append(y)
            rho_list.append(1.0 / sy)
            if len(s_list) > memory:
                s_list.pop(0)
                y_list.pop(0)
                rho_list.pop(0)
        x, f, g = x_new, f_new, g_new
        pg = projected_gradient_norm(x, g, lower, upper)
    else:
        it = max_iter

    if status != "converged" and pg <= pg_tol:
        status = "converged"
    return BoxResult(x=x, f=f, g=g, pg_norm=pg, iterations=it, n_evals=n_evals, status=status)
