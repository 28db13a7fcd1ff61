"""Size-structured stand dynamics: growth, mortality, ingrowth, harvest
economics, and the one-step state recursion.

The stand state is a vector x of tree counts per size class (trees/ha). One
stage covers ``delta_years`` calendar years. Within a stage, trees may die
(share ``mu``), grow into the next class (share ``alpha``), or remain; new
trees enter class 1 as ingrowth driven by total basal area. Harvests are
subtracted after growth, so the stock available for cutting at a stage is
``stock_before_harvest``.

All functions here are pure and operate on plain numpy arrays; the fitness
layer has a compiled fast path that is cross-checked against these
implementations in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import presets

# Tolerance used to absorb floating-point noise when a harvest empties a class.
NEGATIVE_CLAMP = 1e-9

# Fixed coefficients of the cutting and hauling cost functions (euro/min rates
# folded into the published regression constants).
CUT_C0, CUT_C1, CUT_C2 = 0.412, 0.758, 0.180
HAUL_FIXED, HAUL_LIN, HAUL_POW = 14.83, 2.272, 0.5348
HAUL_EXP = 0.7


class ConfigurationError(ValueError):
    """Raised when model data is structurally invalid."""


class InfeasibilityError(RuntimeError):
    """Raised when a harvest would drive some class count negative."""


@dataclass(eq=False)
class SizeClassTable:
    """Per-class tree data: basal area b (m2), diameter d (mm), pulpwood
    volume v1 and sawlog volume v2 (m3/tree). Total volume v = v1 + v2."""

    b: np.ndarray
    d: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    v: np.ndarray = field(init=False)

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        self.d = np.asarray(self.d, dtype=float)
        self.v1 = np.asarray(self.v1, dtype=float)
        self.v2 = np.asarray(self.v2, dtype=float)
        n = self.b.shape[0]
        if n < 1:
            raise ConfigurationError("size-class table must have at least one class")
        for name in ("d", "v1", "v2"):
            if getattr(self, name).shape != (n,):
                raise ConfigurationError(f"size-class column {name} has wrong length")
        if np.any(self.b < 0) or np.any(self.v1 < 0) or np.any(self.v2 < 0):
            raise ConfigurationError("size-class table entries must be nonnegative")
        if np.any(np.diff(self.d) <= 0):
            raise ConfigurationError("diameters must be strictly increasing")
        self.v = self.v1 + self.v2
        # Mortality scale M_s depends only on the diameter column.
        self.mortality_scale = np.exp(2.492 + 0.02 * self.d - 3.2e-5 * self.d**2)

    @property
    def n(self) -> int:
        return self.b.shape[0]

    @classmethod
    def default(cls) -> "SizeClassTable":
        rows = np.array(presets.SIZE_CLASS_ROWS, dtype=float)
        return cls(b=rows[:, 0], d=rows[:, 1], v1=rows[:, 2], v2=rows[:, 3])


@dataclass(frozen=True)
class GrowthParams:
    """Ingrowth (S1, S2, gamma, nu, B0), mortality (m), and growth (A1, A2)
    parameters, plus site index S and latitude L entering the growth trend."""

    S1: float = presets.GROWTH_DEFAULTS["S1"]
    S2: float = presets.GROWTH_DEFAULTS["S2"]
    gamma: float = presets.GROWTH_DEFAULTS["gamma"]
    nu: float = presets.GROWTH_DEFAULTS["nu"]
    B0: float = presets.GROWTH_DEFAULTS["B0"]
    m: float = presets.GROWTH_DEFAULTS["m"]
    A1: float = presets.GROWTH_DEFAULTS["A1"]
    A2: float = presets.GROWTH_DEFAULTS["A2"]
    site_index: float = presets.GROWTH_DEFAULTS["site_index"]
    latitude: float = presets.GROWTH_DEFAULTS["latitude"]

    def __post_init__(self):
        for name in ("S1", "S2", "gamma", "nu", "B0", "m", "A1", "A2",
                     "site_index", "latitude"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"growth parameter {name} must be positive")


@dataclass(frozen=True)
class EconParams:
    """Prices p1 (pulp) and p2 (saw) in euro/m3, cost rates C1 (cutting) and
    C2 (hauling), fixed harvest cost Cf (euro), annual interest rate r, and
    stage length in years."""

    p1: float = presets.ECON_DEFAULTS["p1"]
    p2: float = presets.ECON_DEFAULTS["p2"]
    C1: float = presets.ECON_DEFAULTS["C1"]
    C2: float = presets.ECON_DEFAULTS["C2"]
    Cf: float = presets.ECON_DEFAULTS["Cf"]
    r: float = presets.ECON_DEFAULTS["r"]
    delta_years: int = presets.ECON_DEFAULTS["delta_years"]

    def __post_init__(self):
        if self.delta_years <= 0 or int(self.delta_years) != self.delta_years:
            raise ConfigurationError("delta_years must be a positive integer")
        if not 0 < self.beta < 1:
            raise ConfigurationError("interest rate must satisfy 0 < 1/(1+r) < 1")
        if self.Cf < 0:
            raise ConfigurationError("Cf must be nonnegative")

    @property
    def beta(self) -> float:
        return 1.0 / (1.0 + self.r)

    def stage_discount(self, t) -> float:
        """Discount factor for cash received at the start of stage t."""
        return self.beta ** (t * self.delta_years)


def _check_state(x, table: SizeClassTable):
    x = np.asarray(x, dtype=float)
    if x.shape != (table.n,):
        raise ConfigurationError(
            f"state length {x.shape} does not match table with {table.n} classes"
        )
    return x


def total_basal_area(state, table: SizeClassTable) -> float:
    """Total stand basal area B = sum_s b_s x_s (m2/ha)."""
    x = _check_state(state, table)
    return float(x @ table.b)


def basal_area_above(state, s: int, table: SizeClassTable) -> float:
    """Basal area in classes strictly larger than s (1-based); 0 for s = n."""
    x = _check_state(state, table)
    if not 1 <= s <= table.n:
        raise ValueError(f"class index {s} out of range 1..{table.n}")
    return float(x[s:] @ table.b[s:])


def ingrowth(B: float, p: GrowthParams) -> float:
    """New trees entering class 1 during one stage, as a function of total
    basal area. Positive and finite for all B >= 0."""
    if B < 0:
        raise ValueError("basal area must be nonnegative")
    return p.S1 * (B + p.B0) ** (-p.nu) / (1.0 + p.S2 * math.exp(p.gamma * B))


def mortality_share(s: int, B: float, table: SizeClassTable, p: GrowthParams) -> float:
    """Share of class-s trees dying during one stage; in (0,1), increasing in B."""
    if B < 0:
        raise ValueError("basal area must be nonnegative")
    if not 1 <= s <= table.n:
        raise ValueError(f"class index {s} out of range 1..{table.n}")
    return 1.0 / (1.0 + table.mortality_scale[s - 1] * math.exp(-p.m * B))


def growth_trend(s: int, table: SizeClassTable, p: GrowthParams) -> float:
    """Density-free growth share G_s of class s for the configured site."""
    d = table.d[s - 1]
    return 0.02 * (
        17.839
        + 0.0476 * d
        - 11.585e-5 * d**2
        + 0.906 * p.site_index
        - 0.268 * p.latitude
    )


def growth_share(
    s: int, B: float, B_above: float, table: SizeClassTable, p: GrowthParams
) -> float:
    """Share of class-s trees moving up one class during one stage.

    Returns 0 for the top class. The density-adjusted share
    G_s - A1*B_above - A2*B is clamped at zero; the combined constraint
    mu + alpha <= 1 is enforced by the caller (see ``step``), which rescales
    alpha to 1 - mu when needed.
    """
    if B_above > B:
        raise ValueError("basal area above a class cannot exceed the total")
    if B_above < 0:
        raise ValueError("basal area must be nonnegative")
    if not 1 <= s <= table.n:
        raise ValueError(f"class index {s} out of range 1..{table.n}")
    if s == table.n:
        return 0.0
    raw = growth_trend(s, table, p) - p.A1 * B_above - p.A2 * B
    return max(raw, 0.0)


def gross_revenue(h, table: SizeClassTable, econ: EconParams) -> float:
    """Harvest revenue sum_s h_s (v1_s p1 + v2_s p2), in euros."""
    h = _check_state(h, table)
    return float(h @ (table.v1 * econ.p1 + table.v2 * econ.p2))


def cutting_cost(h, table: SizeClassTable, econ: EconParams) -> float:
    """Variable cutting cost, quadratic in per-tree volume, linear in counts."""
    h = _check_state(h, table)
    per_tree = CUT_C0 + CUT_C1 * table.v + CUT_C2 * table.v**2
    return float(econ.C1 * (h @ per_tree))


def hauling_cost(
    h, delta: int, table: SizeClassTable, econ: EconParams, smoothing: float = 0.0
) -> float:
    """Hauling cost with a fixed term paid whenever a harvest occurs.

    ``smoothing`` replaces V**0.7 by (V+eps)**0.7 - eps**0.7 so the optimizer
    sees a finite derivative at V = 0; the default 0 is the exact formula.
    """
    h = _check_state(h, table)
    if delta == 0:
        if np.any(h > 0):
            raise ValueError("harvest vector must be zero at a no-harvest stage")
        return 0.0
    V = float(h @ table.v)
    if smoothing > 0:
        power = (V + smoothing) ** HAUL_EXP - smoothing**HAUL_EXP
    else:
        power = V**HAUL_EXP
    return econ.C2 * (HAUL_FIXED + HAUL_LIN * V + HAUL_POW * power)


def stage_cash_flow(
    h, delta: int, table: SizeClassTable, econ: EconParams, smoothing: float = 0.0
) -> float:
    """Net cash flow of one stage: revenue minus cutting, hauling, and the
    fixed cost Cf (the latter only when a harvest occurs)."""
    if delta == 0:
        # hauling_cost validates the h = 0 contract
        return 0.0 - hauling_cost(h, 0, table, econ)
    return (
        gross_revenue(h, table, econ)
        - cutting_cost(h, table, econ)
        - hauling_cost(h, 1, table, econ, smoothing)
        - econ.Cf
    )


def transition_shares(state, table: SizeClassTable, p: GrowthParams):
    """Per-class (mu, alpha) at the given state, with alpha clamped to
    [0, 1 - mu]. Returns (mu, alpha, B)."""
    x = _check_state(state, table)
    B = float(x @ table.b)
    mu = 1.0 / (1.0 + table.mortality_scale * np.exp(-p.m * B))
    # suffix sums give basal area strictly above each class
    above = np.concatenate((np.cumsum((table.b * x)[::-1])[::-1][1:], [0.0]))
    trend = 0.02 * (
        17.839
        + 0.0476 * table.d
        - 11.585e-5 * table.d**2
        + 0.906 * p.site_index
        - 0.268 * p.latitude
    )
    alpha = np.maximum(trend - p.A1 * above - p.A2 * B, 0.0)
    alpha[-1] = 0.0
    alpha = np.minimum(alpha, 1.0 - mu)
    return mu, alpha, B


def stock_before_harvest(state, table: SizeClassTable, p: GrowthParams) -> np.ndarray:
    """Stock available for cutting at the end of a stage: ingrowth plus
    upgrowth inflow plus the retained share of each class."""
    x = _check_state(state, table)
    mu, alpha, B = transition_shares(x, table, p)
    pre = (1.0 - mu - alpha) * x
    pre[0] += ingrowth(B, p)
    pre[1:] += alpha[:-1] * x[:-1]
    return pre


def step(state, h, delta: int, table: SizeClassTable, p: GrowthParams) -> np.ndarray:
    """One stage of the recursion: grow the stand, then subtract the harvest.

    Raises InfeasibilityError if any resulting class count is below the
    floating-point clamp tolerance; counts in [-1e-9, 0) are clamped to 0.
    """
    h = _check_state(h, table)
    if delta == 0 and np.any(h > 0):
        raise ValueError("harvest vector must be zero at a no-harvest stage")
    out = stock_before_harvest(state, table, p) - h
    low = out.min()
    if low < -NEGATIVE_CLAMP:
        raise InfeasibilityError(
            f"harvest exceeds available stock (worst class short by {-low:.3g} trees)"
        )
    return np.maximum(out, 0.0)


def simulate(x0, harvests, table: SizeClassTable, p: GrowthParams) -> np.ndarray:
    """Forward recursion from x0 over a sequence of (delta, harvest) pairs.

    Returns an array of shape (len(harvests)+1, n) whose first row is x0.
    """
    x = _check_state(x0, table)
    traj = np.empty((len(harvests) + 1, table.n))
    traj[0] = x
    for t, (delta, h) in enumerate(harvests):
        traj[t + 1] = step(traj[t], h, delta, table, p)
    return traj
