"""Schedule search as one joint program over states, harvests, and timing.

Instead of scoring one fixed genotype at a time, this module poses the whole
question - when to start the repeating cycle, how long the cycle is, which
stages cut, and how hard - as a single finite-dimensional program:

* continuous variables: the state trajectory ``x_1..x_T``, per-stage harvest
  vectors ``h_t``, the steady-cycle anchor state ``xc``, and a split of each
  stage's net cash flow into a transition part ``F0_t`` (counted once) and a
  cycle part ``F1_t`` (counted once per repetition, i.e. weighted by the
  geometric cycle multiplier),
* indicator variables: ``u_t`` marking the cycle start (exactly one), ``r_t``
  marking the cycle end (exactly one), and per-stage harvest flags ``d_t``.

With all indicators integral the program's value equals the fitness of the
corresponding genotype. Relaxing the indicators to [0, 1] yields a
differentiable problem whose local optimum is used as a node bound by the
branch-and-bound driver in :mod:`standopt.bnb`. The relaxation is solved by
the same augmented Lagrangian + projected quasi-Newton stack as the fitness
evaluator, on variables scaled so every box is [0, 1] or [-1, 1].

All local solves are best-effort: bounds are not certified, which is why the
tree search prunes with a relative safety margin instead of exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import presets
from .dynamics import NEGATIVE_CLAMP
from .fitness import SolverOptions, _pack
from .schedule import ScheduleBounds, ScheduleGenotype
from .solver import minimize_box

#: relative margin used by the tree search when comparing local bounds
PRUNE_MARGIN = 1e-3

#: indicator values closer than this to 0/1 count as integral
INTEGRALITY_TOL = 1e-3

#: floor applied to the relaxed cycle length inside the cycle multiplier
CYCLE_LENGTH_FLOOR = 0.25


def state_upper_bound(cfg, steps: int = 100) -> np.ndarray:
    """Componentwise state cap: twice the peak of an unharvested run.

    Harvesting only removes trees, so no reachable trajectory exceeds the
    zero-harvest one; the factor two leaves slack for the relaxation.
    """
    model, _, _, _ = _pack(cfg.size_classes, cfg.growth, cfg.econ)
    x = np.asarray(cfg.initial_state, dtype=float)
    peak = x.copy()
    for _ in range(steps):
        x = _stock_before_harvest(x[None, :], model)[0]
        peak = np.maximum(peak, x)
    return 2.0 * peak


def cash_upper_bound(cfg, x_bar: np.ndarray) -> float:
    """Cap on one stage's |net cash|: clear-cutting the state cap, doubled.

    Both the revenue and the cost side of clear-cutting ``x_bar`` are summed
    so the bound also holds for configurations where costs dominate.
    """
    table, econ = cfg.size_classes, cfg.econ
    best_price = max(econ.p1, econ.p2)
    revenue = float(x_bar @ (table.v * best_price))
    _, _, haul_lin, haul_pow, fix_cost = _unit_terms(cfg)
    volume = float(x_bar @ table.v)
    cutting = float(econ.C1 * x_bar @ (0.412 + 0.758 * table.v + 0.180 * table.v**2))
    hauling = haul_lin * volume + haul_pow * volume**0.7
    return 2.0 * (revenue + cutting + hauling + fix_cost)


def _unit_terms(cfg):
    model, haul_lin, haul_pow, fix_cost = _pack(cfg.size_classes, cfg.growth,
                                                cfg.econ)
    rev_unit, cut_unit = model[4], model[5]
    return rev_unit, cut_unit, haul_lin, haul_pow, fix_cost


def _stock_before_harvest(x, model):
    """Vectorized one-stage growth map for a batch of states (rows)."""
    (b, trend, Ms, _v, _ru, _cu, S1, S2, gamma, nu, B0, m_rate, A1, A2) = model
    B = x @ b
    phi = S1 * (B + B0) ** (-nu) / (1.0 + S2 * np.exp(gamma * B))
    mu = 1.0 / (1.0 + Ms[None, :] * np.exp(-m_rate * B)[:, None])
    bx = x * b[None, :]
    above = bx[:, ::-1].cumsum(axis=1)[:, ::-1] - bx
    raw = trend[None, :] - A1 * above - A2 * B[:, None]
    alpha = np.maximum(raw, 0.0)
    alpha[:, -1] = 0.0
    alpha = np.minimum(alpha, 1.0 - mu)
    inflow = np.empty_like(x)
    inflow[:, 0] = phi
    inflow[:, 1:] = alpha[:, :-1] * x[:, :-1]
    return inflow + (1.0 - mu - alpha) * x


@dataclass(frozen=True)
class BranchNode:
    """One node of the timing partition: inclusive index ranges for the
    cycle start ``t0`` and length ``s``, plus any harvest flags already fixed."""

    t_lo: int
    t_hi: int
    s_lo: int
    s_hi: int
    delta_fixed: tuple = ()
    depth: int = 0

    def __post_init__(self):
        if not (1 <= self.t_lo <= self.t_hi and 1 <= self.s_lo <= self.s_hi):
            raise ValueError("node ranges must be nonempty with t_lo >= 1")

    @property
    def horizon(self) -> int:
        """Number of stages the node's program spans."""
        return self.t_hi + self.s_hi

    @property
    def fully_fixed(self) -> bool:
        """True when the ranges are singletons and every in-horizon flag
        before the cycle end is pinned."""
        if self.t_lo != self.t_hi or self.s_lo != self.s_hi:
            return False
        fixed = dict(self.delta_fixed)
        return all(t in fixed for t in range(self.t_lo + self.s_lo))

    def genotype(self) -> ScheduleGenotype:
        """Decode a fully fixed node into its schedule genotype."""
        if not self.fully_fixed:
            raise ValueError("node does not pin a unique schedule")
        fixed = dict(self.delta_fixed)
        bits = "".join(str(fixed[t]) for t in range(self.t_lo + self.s_lo))
        return ScheduleGenotype(bits[:self.t_lo], bits[self.t_lo:])


def root_node(bounds: ScheduleBounds) -> BranchNode:
    return BranchNode(bounds.t_min, bounds.t_max, bounds.s_min, bounds.s_max)


def node_for_genotype(g: ScheduleGenotype) -> BranchNode:
    """The fully fixed node whose program scores exactly one genotype."""
    deltas = tuple((t, g.delta_at(t)) for t in range(g.t1))
    return BranchNode(g.t0, g.t0, g.s_len, g.s_len, deltas)


class _Layout:
    """Flat-vector layout of the scaled decision variables.

    Order: states X (T, n) for x_1..x_T, harvests H (T, n), cycle anchor
    xc (n,), start marks u (T+1,), end marks r (T+1,), harvest flags d (T,),
    transition cash F0 (T,), cycle cash F1 (T,).
    """

    def __init__(self, T: int, n: int):
        self.T, self.n = T, n
        sizes = (T * n, T * n, n, T + 1, T + 1, T, T, T)
        names = ("X", "H", "xc", "u", "r", "d", "F0", "F1")
        offset = 0
        self.slices = {}
        for name, size in zip(names, sizes):
            self.slices[name] = slice(offset, offset + size)
            offset += size
        self.size = offset

    def views(self, z: np.ndarray) -> dict:
        T, n = self.T, self.n
        out = {}
        for name, sl in self.slices.items():
            block = z[sl]
            out[name] = block.reshape(T, n) if name in ("X", "H") else block
        return out


@dataclass(eq=False)
class RelaxResult:
    """Outcome of one node relaxation solve."""

    value: float
    z: np.ndarray
    status: str
    residual: float
    pg_norm: float
    attempts: int
    outer_iterations: int


@dataclass(eq=False)
class Assignment:
    """Integral reading of a relaxation solution, when one exists."""

    integral: bool
    t0: int = -1
    t1: int = -1
    genotype: ScheduleGenotype = None
    empty_cycle: bool = False


class MipStructure:
    """Problem data shared by every node of one search tree."""

    def __init__(self, cfg, bounds: ScheduleBounds = None):
        self.cfg = cfg
        self.bounds = bounds if bounds is not None else cfg.bounds
        self.model, self.haul_lin, self.haul_pow, self.fix_cost = _pack(
            cfg.size_classes, cfg.growth, cfg.econ)
        self.n = cfg.size_classes.n
        self.x0 = np.asarray(cfg.initial_state, dtype=float)
        self.x_bar = state_upper_bound(cfg)
        self.F_bar = cash_upper_bound(cfg, self.x_bar)
        self.beta = cfg.econ.beta
        self.dy = cfg.econ.delta_years

    def problem(self, node: BranchNode, smoothing: float) -> "_NodeProblem":
        return _NodeProblem(self, node, smoothing)


class _NodeProblem:
    """Scaled relaxation of one branch node, with value/gradient callbacks."""

    def __init__(self, struct: MipStructure, node: BranchNode, smoothing: float):
        self.struct = struct
        self.node = node
        self.eps = float(smoothing)
        self.T = node.horizon
        self.n = struct.n
        self.layout = _Layout(self.T, self.n)
        T, n = self.T, self.n

        self.W_u = np.arange(node.t_lo, node.t_hi + 1)
        self.W_r = np.arange(node.t_lo + node.s_lo, T + 1)
        self.W_pin = np.unique(np.concatenate([self.W_u, self.W_r]))
        fixed = dict(node.delta_fixed)
        self.fixed_delta = fixed
        self.free_d = np.array(
            [t for t in range(T) if t not in fixed], dtype=int)
        # stages whose flag can be 1, hence constrained to lie before the end
        self.D_r = np.array(
            [t for t in range(T) if fixed.get(t, 1) == 1], dtype=int)
        self.W_F0 = np.arange(0, node.t_hi)
        self.W_F1 = np.arange(node.t_lo, T)
        self.t_idx = np.arange(T + 1, dtype=float)
        self.disc = struct.beta ** (struct.dy * np.arange(T))

        self._build_box()
        self._build_residual_slices()

    # -- problem setup -----------------------------------------------------

    def _build_box(self):
        lay, node, T = self.layout, self.node, self.T
        lower = np.zeros(lay.size)
        upper = np.zeros(lay.size)
        v = lay.views(upper)
        v["X"][:] = 1.0
        v["H"][:] = 1.0
        v["xc"][:] = 1.0
        v["u"][self.W_u] = 1.0
        v["r"][self.W_r] = 1.0
        if self.W_u.size == 1:
            lower[lay.slices["u"]][self.W_u] = 1.0
        if self.W_r.size == 1:
            lower[lay.slices["r"]][self.W_r] = 1.0
        for t in range(T):
            fixed = self.fixed_delta.get(t)
            if fixed is None:
                v["d"][t] = 1.0
            else:
                v["d"][t] = float(fixed)
                if fixed == 0:
                    v["H"][t] = 0.0
        lv = lay.views(lower)
        for t, val in self.fixed_delta.items():
            lv["d"][t] = float(val)
        v["F0"][self.W_F0] = 1.0
        v["F1"][self.W_F1] = 1.0
        lf = lay.views(lower)
        lf["F0"][self.W_F0] = -1.0
        lf["F1"][self.W_F1] = -1.0
        self.lower, self.upper = lower, upper

    def _build_residual_slices(self):
        T, n = self.T, self.n
        npin = self.W_pin.size * n
        eq_sizes = (T * n, T, 1, 1)
        eq_names = ("dyn", "cash", "usum", "rsum")
        offset = 0
        self.eq_slices = {}
        for name, size in zip(eq_names, eq_sizes):
            self.eq_slices[name] = slice(offset, offset + size)
            offset += size
        self.n_eq = offset
        in_sizes = (npin, npin, self.free_d.size * n, self.D_r.size,
                    self.W_F0.size, self.W_F0.size,
                    self.W_F1.size, self.W_F1.size, 1, 1)
        in_names = ("pin_hi", "pin_lo", "hd", "dr", "f0_hi", "f0_lo",
                    "f1_hi", "f1_lo", "s_lo", "s_hi")
        offset = 0
        self.in_slices = {}
        for name, size in zip(in_names, in_sizes):
            self.in_slices[name] = slice(offset, offset + size)
            offset += size
        self.n_in = offset

    # -- forward evaluation -------------------------------------------------

    def _forward(self, z: np.ndarray) -> dict:
        st, lay = self.struct, self.layout
        (b, trend, Ms, vol, rev_unit, cut_unit,
         S1, S2, gamma, nu, B0, m_rate, A1, A2) = st.model
        vw = lay.views(z)
        x_bar = st.x_bar
        x_full = np.empty((self.T + 1, self.n))
        x_full[0] = st.x0
        x_full[1:] = vw["X"] * x_bar[None, :]
        h = vw["H"] * x_bar[None, :]

        x = x_full[:-1]
        B = x @ b
        egb = np.exp(gamma * B)
        phi = S1 * (B + B0) ** (-nu) / (1.0 + S2 * egb)
        mu = 1.0 / (1.0 + Ms[None, :] * np.exp(-m_rate * B)[:, None])
        bx = x * b[None, :]
        above = bx[:, ::-1].cumsum(axis=1)[:, ::-1] - bx
        raw = trend[None, :] - A1 * above - A2 * B[:, None]
        amax = 1.0 - mu
        alpha = np.maximum(raw, 0.0)
        alpha[:, -1] = 0.0
        reg = np.zeros_like(alpha, dtype=np.int8)
        reg[raw <= 0.0] = 1
        reg[:, -1] = 1
        rescale = alpha > amax
        reg[rescale] = 2
        alpha = np.minimum(alpha, amax)
        inflow = np.empty_like(x)
        inflow[:, 0] = phi
        inflow[:, 1:] = alpha[:, :-1] * x[:, :-1]
        pre = inflow + (1.0 - mu - alpha) * x

        V = h @ vol
        power = (V + self.eps) ** 0.7 - self.eps ** 0.7
        net = (h @ (rev_unit - cut_unit) - st.haul_lin * V
               - st.haul_pow * power - vw["d"] * st.fix_cost)

        return {"views": vw, "x_full": x_full, "h": h, "B": B, "phi": phi,
                "egb": egb, "mu": mu, "alpha": alpha, "reg": reg, "pre": pre,
                "V": V, "net": net}

    def residuals(self, z: np.ndarray, fwd: dict = None):
        """Scaled equality and inequality residual vectors (g = 0, c <= 0)."""
        if fwd is None:
            fwd = self._forward(z)
        st, node, T, n = self.struct, self.node, self.T, self.n
        vw = fwd["views"]
        g = np.empty(self.n_eq)
        g[self.eq_slices["dyn"]] = (
            (fwd["x_full"][1:] - fwd["pre"] + fwd["h"]) / st.x_bar[None, :]
        ).ravel()
        g[self.eq_slices["cash"]] = vw["F0"] + vw["F1"] - fwd["net"] / st.F_bar
        g[self.eq_slices["usum"]] = vw["u"].sum() - 1.0
        g[self.eq_slices["rsum"]] = vw["r"].sum() - 1.0

        c = np.empty(self.n_in)
        slack = 1.0 - vw["u"][self.W_pin] - vw["r"][self.W_pin]
        x_pin = fwd["x_full"][self.W_pin] / st.x_bar[None, :]
        diff = x_pin - vw["xc"][None, :]
        c[self.in_slices["pin_hi"]] = (diff - slack[:, None]).ravel()
        c[self.in_slices["pin_lo"]] = (-diff - slack[:, None]).ravel()
        c[self.in_slices["hd"]] = (
            vw["H"][self.free_d] - vw["d"][self.free_d, None]).ravel()
        r_after = _suffix_sum_above(vw["r"])
        c[self.in_slices["dr"]] = vw["d"][self.D_r] - r_after[self.D_r]
        u_after = _suffix_sum_above(vw["u"])[self.W_F0]
        c[self.in_slices["f0_hi"]] = vw["F0"][self.W_F0] - u_after
        c[self.in_slices["f0_lo"]] = -vw["F0"][self.W_F0] - u_after
        S = np.cumsum(vw["u"][:T] - vw["r"][:T])[self.W_F1]
        c[self.in_slices["f1_hi"]] = vw["F1"][self.W_F1] - S
        c[self.in_slices["f1_lo"]] = -vw["F1"][self.W_F1] - S
        s_expr = float(self.t_idx @ (vw["r"] - vw["u"]))
        c[self.in_slices["s_lo"]] = node.s_lo - s_expr
        c[self.in_slices["s_hi"]] = s_expr - node.s_hi
        return g, c

    def objective(self, z: np.ndarray, fwd: dict = None) -> float:
        """Relaxed discounted value in cash units (not scaled)."""
        if fwd is None:
            fwd = self._forward(z)
        vw = fwd["views"]
        s_expr = float(self.t_idx @ (vw["r"] - vw["u"]))
        K = self._multiplier(s_expr)
        scaled = float(self.disc @ vw["F0"] + K * (self.disc @ vw["F1"]))
        return scaled * self.struct.F_bar

    def _multiplier(self, s_expr: float) -> float:
        s = max(s_expr, CYCLE_LENGTH_FLOOR)
        return 1.0 / (1.0 - self.struct.beta ** (self.struct.dy * s))

    # -- augmented Lagrangian value and gradient -----------------------------

    def lagrangian(self, z, lam, mu_in, rho):
        """Value and gradient of -objective + augmented Lagrangian terms."""
        st, node, T, n = self.struct, self.node, self.T, self.n
        (b, trend, Ms, vol, rev_unit, cut_unit,
         S1, S2, gamma, nu, B0, m_rate, A1, A2) = st.model
        fwd = self._forward(z)
        vw = fwd["views"]
        g, c = self.residuals(z, fwd)

        w_eq = lam + rho * g
        w_in = np.maximum(0.0, mu_in + rho * c)
        s_expr = float(self.t_idx @ (vw["r"] - vw["u"]))
        K = self._multiplier(s_expr)
        obj_scaled = float(self.disc @ vw["F0"] + K * (self.disc @ vw["F1"]))
        f = (-obj_scaled + float(lam @ g) + 0.5 * rho * float(g @ g)
             + (float(w_in @ w_in) - float(mu_in @ mu_in)) / (2.0 * rho))

        grad = np.zeros(self.layout.size)
        gv = self.layout.views(grad)

        # objective
        gv["F0"] -= self.disc
        gv["F1"] -= K * self.disc
        if s_expr > CYCLE_LENGTH_FLOOR:
            SF1 = float(self.disc @ vw["F1"])
            bpow = st.beta ** (st.dy * s_expr)
            Kp = st.dy * math.log(st.beta) * bpow / (1.0 - bpow) ** 2
            gv["u"] += SF1 * Kp * self.t_idx
            gv["r"] -= SF1 * Kp * self.t_idx

        # dynamics rows: x_{t+1} - pre(x_t) + h_t, scaled by 1/x_bar
        w_dyn = w_eq[self.eq_slices["dyn"]].reshape(T, n)
        gv["X"] += w_dyn
        gv["H"] += w_dyn
        q = w_dyn / st.x_bar[None, :]      # physical-equation weights
        q_out = self._growth_map_transpose(fwd, q)
        gv["X"][:-1] -= q_out[1:] * st.x_bar[None, :]

        # cash rows
        w_cash = w_eq[self.eq_slices["cash"]]
        gv["F0"] += w_cash
        gv["F1"] += w_cash
        dpow = 0.7 * (fwd["V"] + self.eps) ** (-0.3)
        margin = (rev_unit[None, :] - cut_unit[None, :]
                  - (st.haul_lin + st.haul_pow * dpow[:, None]) * vol[None, :])
        gv["H"] -= w_cash[:, None] * margin * st.x_bar[None, :] / st.F_bar
        gv["d"] += w_cash * (st.fix_cost / st.F_bar)

        # indicator sums
        gv["u"] += w_eq[self.eq_slices["usum"]]
        gv["r"] += w_eq[self.eq_slices["rsum"]]

        # cycle pinning
        m_hi = w_in[self.in_slices["pin_hi"]].reshape(-1, n)
        m_lo = w_in[self.in_slices["pin_lo"]].reshape(-1, n)
        gv["X"][self.W_pin - 1] += m_hi - m_lo
        gv["xc"] += (m_lo - m_hi).sum(axis=0)
        both = (m_hi + m_lo).sum(axis=1)
        gv["u"][self.W_pin] += both
        gv["r"][self.W_pin] += both

        # harvest-flag coupling h <= d
        if self.free_d.size:
            m_hd = w_in[self.in_slices["hd"]].reshape(-1, n)
            gv["H"][self.free_d] += m_hd
            gv["d"][self.free_d] -= m_hd.sum(axis=1)

        # flags precede the cycle end: d_t <= sum_{tau > t} r_tau
        if self.D_r.size:
            m_dr = w_in[self.in_slices["dr"]]
            gv["d"][self.D_r] += m_dr
            full = np.zeros(T)
            full[self.D_r] = m_dr
            gv["r"][1:] -= np.cumsum(full)

        # transition cash window
        m_hi = w_in[self.in_slices["f0_hi"]]
        m_lo = w_in[self.in_slices["f0_lo"]]
        gv["F0"][self.W_F0] += m_hi - m_lo
        full = np.zeros(T)
        full[self.W_F0] = m_hi + m_lo
        gv["u"][1:] -= np.cumsum(full)

        # cycle cash window
        m_hi = w_in[self.in_slices["f1_hi"]]
        m_lo = w_in[self.in_slices["f1_lo"]]
        gv["F1"][self.W_F1] += m_hi - m_lo
        full = np.zeros(T)
        full[self.W_F1] = m_hi + m_lo
        suffix = np.cumsum(full[::-1])[::-1]
        gv["u"][:T] -= suffix
        gv["r"][:T] += suffix

        # cycle length box
        m_lo = float(w_in[self.in_slices["s_lo"]][0])
        m_hi = float(w_in[self.in_slices["s_hi"]][0])
        gv["u"] += (m_lo - m_hi) * self.t_idx
        gv["r"] += (m_hi - m_lo) * self.t_idx

        return f, grad

    def _growth_map_transpose(self, fwd: dict, q: np.ndarray) -> np.ndarray:
        """Rows t of the result are (d pre_t / d x_t)^T q_t.

        Same stagewise algebra as the reverse sweep of the fitness gradient,
        vectorized over all stages at once.
        """
        st = self.struct
        (b, trend, Ms, vol, rev_unit, cut_unit,
         S1, S2, gamma, nu, B0, m_rate, A1, A2) = st.model
        x = fwd["x_full"][:-1]
        mu, alpha, reg = fwd["mu"], fwd["alpha"], fwd["reg"]
        B, phi, egb = fwd["B"], fwd["phi"], fwd["egb"]

        q_next = np.zeros_like(q)
        q_next[:, :-1] = q[:, 1:]
        direct = q * (1.0 - mu - alpha) + q_next * alpha

        mu_p = m_rate * mu * (1.0 - mu)
        T_j = x * (q_next - q)
        interior = reg == 0
        rescaled = reg == 2
        phi_p = phi * (-nu / (B + B0) - S2 * gamma * egb / (1.0 + S2 * egb))
        scal = (q[:, 0] * phi_p
                - np.einsum("ij,ij->i", x * mu_p, q)
                - A2 * (T_j * interior).sum(axis=1)
                - (mu_p * T_j * rescaled).sum(axis=1))
        prefix = np.cumsum(T_j * interior, axis=1)
        run = np.zeros_like(q)
        run[:, 1:] = -A1 * prefix[:, :-1]
        return direct + b[None, :] * (scal[:, None] + run)

    # -- starts and integrality ----------------------------------------------

    def fresh_start(self, seed: int) -> np.ndarray:
        """Feasible-leaning start: the unharvested trajectory, uniform
        indicator mass over the admissible windows, light random harvests."""
        rng = np.random.default_rng(seed)
        z = np.zeros(self.layout.size)
        vw = self.layout.views(z)
        x = self.struct.x0.copy()
        for t in range(self.T):
            x = _stock_before_harvest(x[None, :], self.struct.model)[0]
            vw["X"][t] = np.minimum(x / self.struct.x_bar, 1.0)
        vw["u"][self.W_u] = 1.0 / self.W_u.size
        vw["r"][self.W_r] = 1.0 / self.W_r.size
        for t in range(self.T):
            fixed = self.fixed_delta.get(t)
            vw["d"][t] = rng.uniform(0.2, 0.8) if fixed is None else float(fixed)
        vw["H"][:] = rng.uniform(0.0, 0.1, size=vw["H"].shape)
        vw["H"][vw["d"] == 0.0] = 0.0
        vw["xc"][:] = vw["X"][min(self.node.t_lo, self.T - 1)]
        return np.clip(z, self.lower, self.upper)

    def project(self, z: np.ndarray) -> np.ndarray:
        return np.clip(z, self.lower, self.upper)

    def assignment(self, z: np.ndarray, tol: float = INTEGRALITY_TOL) -> Assignment:
        """Read an integral (t0, s, flags) off a relaxation solution."""
        vw = self.layout.views(z)
        u, r, d = vw["u"], vw["r"], vw["d"]
        t0 = int(np.argmax(u))
        t1 = int(np.argmax(r))
        if u[t0] < 1.0 - tol or u.sum() - u[t0] > tol:
            return Assignment(integral=False)
        if r[t1] < 1.0 - tol or r.sum() - r[t1] > tol:
            return Assignment(integral=False)
        if not (self.node.s_lo <= t1 - t0 <= self.node.s_hi
                and self.node.t_lo <= t0 <= self.node.t_hi):
            return Assignment(integral=False)
        bits = []
        for t in range(t1):
            val = self.fixed_delta.get(t)
            if val is None:
                frac = float(d[t])
                if min(frac, 1.0 - frac) > tol:
                    return Assignment(integral=False)
                val = int(round(frac))
            bits.append(str(val))
        cycle = "".join(bits[t0:])
        if "1" not in cycle:
            return Assignment(integral=True, t0=t0, t1=t1, genotype=None,
                              empty_cycle=True)
        genotype = ScheduleGenotype("".join(bits[:t0]), cycle)
        return Assignment(integral=True, t0=t0, t1=t1, genotype=genotype)


def _suffix_sum_above(vec: np.ndarray) -> np.ndarray:
    """out[t] = sum of vec[tau] over tau > t."""
    out = np.zeros_like(vec)
    out[:-1] = np.cumsum(vec[::-1])[::-1][1:]
    return out


def _truncate_warm(z_parent: np.ndarray, parent_T: int,
                   child: "_NodeProblem") -> np.ndarray:
    """Carry a parent solution into a child layout (horizons may differ)."""
    pv = _Layout(parent_T, child.n).views(z_parent)
    z = np.zeros(child.layout.size)
    cv = child.layout.views(z)
    T = child.T
    cv["X"][:] = pv["X"][:T]
    cv["H"][:] = pv["H"][:T]
    cv["xc"][:] = pv["xc"]
    for name in ("u", "r"):
        cv[name][:] = pv[name][:T + 1]
    for name in ("d", "F0", "F1"):
        cv[name][:] = pv[name][:T]
    return child.project(z)


def solve_relaxation(struct: MipStructure, node: BranchNode,
                     opts: SolverOptions = None, warm: np.ndarray = None,
                     warm_horizon: int = None, seed: int = 0,
                     max_attempts: int = 2):
    """Solve one node's relaxation; returns (RelaxResult, _NodeProblem).

    The first attempt reuses the parent solution when one is supplied, and an
    infeasible attempt is retried once from a fresh start. ``attempts`` in
    the result is the number of solve attempts consumed (call accounting).
    """
    opts = opts if opts is not None else SolverOptions()
    prob = struct.problem(node, opts.smoothing_eps)
    starts = []
    if warm is not None:
        starts.append(_truncate_warm(warm, warm_horizon, prob)
                      if warm_horizon is not None else prob.project(warm))
    while len(starts) < max_attempts:
        starts.append(prob.fresh_start(seed + len(starts)))

    max_inner = max(opts.max_inner, min(8000, 6 * prob.layout.size))
    best = None
    attempts = 0
    for z0 in starts[:max_attempts]:
        attempts += 1
        result = _solve_one(prob, z0, opts, max_inner)
        if best is None or (result[0], result[1]) > (best[0], best[1]):
            best = result
        if result[0] > 0:
            # feasible: a retry would climb the same objective ridge, and
            # only a fully converged solve yields a usable bound anyway
            break
    rank, value, z, residual, pg, outers = best
    status = ("converged", "feasible", "failed")[2 - rank]
    return RelaxResult(value=value, z=z, status=status, residual=residual,
                       pg_norm=pg, attempts=attempts,
                       outer_iterations=outers), prob


def _solve_one(prob: _NodeProblem, z0: np.ndarray, opts: SolverOptions,
               max_inner: int):
    """One multiplier loop; returns (rank, value, z, residual, pg, outers)
    with rank 2 = converged, 1 = feasible but not stationary, 0 = infeasible.

    A point that stays feasible for several multiplier updates without
    approaching stationarity is riding an unbounded-looking objective ridge
    (possible whenever the timing indicators are still fractional); the loop
    exits early then, since such a node is branched rather than pruned.
    """
    lam = np.zeros(prob.n_eq)
    mu_in = np.zeros(prob.n_in)
    rho = opts.penalty_init
    z = prob.project(z0)
    prev_res = math.inf
    residual = math.inf
    pg = math.inf
    value = -math.inf
    outer = 0
    feasible_streak = 0
    for outer in range(1, opts.max_outer + 1):
        loose = 100.0 if outer == 1 else (10.0 if outer == 2 else 1.0)

        def value_grad(point, lam=lam, mu_in=mu_in, rho=rho):
            return prob.lagrangian(point, lam, mu_in, rho)

        box = minimize_box(
            value_grad, z, prob.lower, prob.upper,
            pg_tol=opts.stationarity_tol * loose, max_iter=max_inner,
            memory=30)
        z = box.x
        g, c = prob.residuals(z)
        residual = max(np.abs(g).max(), float(np.maximum(c, 0.0).max(initial=0.0)))
        value = prob.objective(z)
        pg = box.pg_norm
        scaled_obj = value / prob.struct.F_bar
        if (residual <= opts.constraint_tol
                and pg <= opts.stationarity_tol * (1.0 + abs(scaled_obj))):
            return 2, value, z, residual, pg, outer
        if residual <= opts.constraint_tol:
            feasible_streak += 1
            if feasible_streak >= 3:
                return 1, value, z, residual, pg, outer
        else:
            feasible_streak = 0
        lam = lam + rho * g
        mu_in = np.maximum(0.0, mu_in + rho * c)
        if residual > 0.25 * prev_res:
            rho *= opts.penalty_growth
        prev_res = residual
    rank = 1 if residual <= opts.constraint_tol else 0
    return rank, value, z, residual, pg, outer
