"""Compiled stage-recursion kernels behind the fitness evaluator.

The readable reference for the stand model lives in :mod:`standopt.dynamics`;
the functions here repeat that algebra in loops numba can compile, and add a
reverse-mode sweep that turns one simulated schedule into the exact gradient
of the discounted objective with respect to every harvest fraction. The test
suite cross-checks both sweeps against the plain implementation and against
central finite differences.

Controls are dense: ``fractions`` has one row per stage, and rows belonging
to no-harvest stages are simply ignored (their gradient is zero). Callers
must pass fractions already projected into [0, 1]; the sweeps assume
nonnegative stocks throughout.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .dynamics import HAUL_EXP

__all__ = ["forward_sweep", "adjoint_sweep"]


@njit(cache=True)
def forward_sweep(
    x0,
    fractions,
    delta,
    weights,
    b,
    trend,
    Ms,
    v,
    rev_unit,
    cut_unit,
    S1,
    S2,
    gamma,
    nu,
    B0,
    m_rate,
    A1,
    A2,
    haul_lin,
    haul_pow,
    fix_cost,
    eps,
):
    """Simulate ``t1`` stages and accumulate the weighted cash-flow sum.

    Harvests are ``h = fractions * stock_before_harvest`` at stages with
    ``delta == 1`` and zero elsewhere; ``weights[t]`` multiplies the stage-t
    cash flow in the returned objective value. ``eps > 0`` smooths the
    hauling power term so its derivative stays finite at zero volume.

    Returns ``(value, X, H, CASH, VOL, MU, AL, REG, PRE, BTOT)`` where X is
    the (t1+1, n) trajectory and the remaining arrays record the per-stage
    quantities the reverse sweep needs: mortality and upgrowth shares, the
    upgrowth regime (0 interior, 1 clamped at zero, 2 rescaled to 1 - mu),
    pre-harvest stocks, total basal area, and harvested volume.
    """
    t1, n = fractions.shape
    X = np.empty((t1 + 1, n))
    for s in range(n):
        X[0, s] = x0[s]
    H = np.zeros((t1, n))
    MU = np.empty((t1, n))
    AL = np.empty((t1, n))
    REG = np.zeros((t1, n), dtype=np.int8)
    PRE = np.empty((t1, n))
    BTOT = np.empty(t1)
    VOL = np.zeros(t1)
    CASH = np.zeros(t1)
    value = 0.0
    for t in range(t1):
        B = 0.0
        for s in range(n):
            B += b[s] * X[t, s]
        BTOT[t] = B
        phi = S1 * (B + B0) ** (-nu) / (1.0 + S2 * math.exp(gamma * B))
        above = 0.0
        for s in range(n - 1, -1, -1):
            mu_s = 1.0 / (1.0 + Ms[s] * math.exp(-m_rate * B))
            MU[t, s] = mu_s
            if s == n - 1:
                AL[t, s] = 0.0
                REG[t, s] = 1
            else:
                raw = trend[s] - A1 * above - A2 * B
                if raw <= 0.0:
                    AL[t, s] = 0.0
                    REG[t, s] = 1
                elif raw > 1.0 - mu_s:
                    AL[t, s] = 1.0 - mu_s
                    REG[t, s] = 2
                else:
                    AL[t, s] = raw
                    REG[t, s] = 0
            above += b[s] * X[t, s]
        cut = delta[t] == 1
        V = 0.0
        cash = 0.0
        for s in range(n):
            if s == 0:
                inflow = phi
            else:
                inflow = AL[t, s - 1] * X[t, s - 1]
            pre = inflow + (1.0 - MU[t, s] - AL[t, s]) * X[t, s]
            PRE[t, s] = pre
            if cut:
                h = fractions[t, s] * pre
            else:
                h = 0.0
            H[t, s] = h
            X[t + 1, s] = pre - h
            V += h * v[s]
            cash += h * (rev_unit[s] - cut_unit[s])
        if cut:
            VOL[t] = V
            if eps > 0.0:
                power = (V + eps) ** HAUL_EXP - eps**HAUL_EXP
            else:
                power = V**HAUL_EXP
            cash -= haul_lin * V + haul_pow * power + fix_cost
            CASH[t] = cash
            value += weights[t] * cash
    return value, X, H, CASH, VOL, MU, AL, REG, PRE, BTOT


@njit(cache=True)
def adjoint_sweep(
    fractions,
    delta,
    weights,
    wprime,
    t0,
    X,
    MU,
    AL,
    REG,
    PRE,
    BTOT,
    VOL,
    b,
    v,
    rev_unit,
    cut_unit,
    S1,
    S2,
    gamma,
    nu,
    B0,
    m_rate,
    A1,
    A2,
    haul_lin,
    haul_pow,
    eps,
):
    """Reverse sweep for Phi = -value + wprime @ (X[t1] - X[t0]).

    Consumes the per-stage records produced by :func:`forward_sweep` (with
    the same ``eps``, which must be positive so the hauling derivative is
    finite) and returns ``(grad, a0)``: the (t1, n) array dPhi/dfractions,
    zero at no-harvest stages, and dPhi/dx0 as a by-product.

    Three effects propagate a stage's adjoint backwards: the direct
    retention and upgrowth flows, the shared dependence of ingrowth,
    mortality and upgrowth on total basal area, and the dependence of each
    interior upgrowth share on the basal area standing above its class,
    which accumulates as a prefix sum over classes.
    """
    t1, n = fractions.shape
    a = wprime.copy()
    grad = np.zeros((t1, n))
    P = np.empty(n)
    anew = np.empty(n)
    for t in range(t1 - 1, -1, -1):
        q = weights[t]
        B = BTOT[t]
        if delta[t] == 1:
            vp = VOL[t] + eps
            if vp > 0.0:
                dpow = HAUL_EXP * vp ** (HAUL_EXP - 1.0)
            else:
                dpow = 0.0
            for s in range(n):
                mval = (
                    rev_unit[s]
                    - cut_unit[s]
                    - haul_lin * v[s]
                    - haul_pow * dpow * v[s]
                )
                f = fractions[t, s]
                P[s] = a[s] * (1.0 - f) - q * mval * f
                grad[t, s] = -PRE[t, s] * (a[s] + q * mval)
        else:
            for s in range(n):
                P[s] = a[s]
        eg = S2 * math.exp(gamma * B)
        phi = S1 * (B + B0) ** (-nu) / (1.0 + eg)
        dphi = phi * (-nu / (B + B0) - gamma * eg / (1.0 + eg))
        scal = P[0] * dphi
        for j in range(n):
            if j + 1 < n:
                Pnext = P[j + 1]
            else:
                Pnext = 0.0
            Tj = X[t, j] * (Pnext - P[j])
            dmu = m_rate * MU[t, j] * (1.0 - MU[t, j])
            scal -= X[t, j] * dmu * P[j]
            if REG[t, j] == 0:
                scal -= A2 * Tj
            elif REG[t, j] == 2:
                scal -= dmu * Tj
        run = 0.0
        for k in range(n):
            if k + 1 < n:
                Pnext = P[k + 1]
            else:
                Pnext = 0.0
            anew[k] = (
                P[k] * (1.0 - MU[t, k] - AL[t, k])
                + Pnext * AL[t, k]
                + b[k] * (scal + run)
            )
            if REG[t, k] == 0:
                run -= A1 * X[t, k] * (Pnext - P[k])
        for s in range(n):
            a[s] = anew[s]
        if t == t0:
            for s in range(n):
                a[s] -= wprime[s]
    return grad, a
