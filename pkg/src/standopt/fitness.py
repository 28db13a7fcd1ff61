"""Schedule fitness: the best discounted value attainable for a fixed
cutting pattern, and the machinery that finds it.

A genotype fixes which stages cut. The remaining decision is continuous:
the fraction of each size class removed at every cutting stage. Controls
are fractions of the stock standing at harvest time, so the state stays
nonnegative for any control in [0,1] and the only coupling constraint left
is that the state at the end of the cycle equals the state at its start.
That equality is enforced by an augmented Lagrangian outer loop around a
projected quasi-Newton solve; gradients come from a reverse sweep through
the full stand recursion (see :mod:`standopt._kernels`).

The objective is the transition cash flows plus the cycle cash flows scaled
by the geometric-series factor 1/(1 - beta^(cycle years)), i.e. the value of
repeating the cycle forever.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from . import presets
from ._kernels import adjoint_sweep, forward_sweep
from .dynamics import CUT_C0, CUT_C1, CUT_C2, HAUL_FIXED, HAUL_LIN, HAUL_POW
from .schedule import ScheduleGenotype
from .solver import minimize_box

__all__ = [
    "ControlVector",
    "FitnessCache",
    "FitnessResult",
    "SolverOptions",
    "cycle_multiplier",
    "evaluate_fitness",
    "gradient",
    "model_fingerprint",
    "npv_finite",
    "random_initial_controls",
    "steady_residual",
]

# Smallest size class whose trees may be cut by the *initial* random draw.
# Classes up to this 1-based index start unharvested; the optimizer itself
# may still move any fraction afterwards.
INIT_UNHARVESTED_CLASSES = 5


@dataclass(eq=False)
class ControlVector:
    """Harvest fractions, one row per cutting stage (ascending stage order).

    ``fractions[k, s]`` is the share of class ``s`` stock removed at stage
    ``stages[k]``; every entry lies in [0, 1].
    """

    stages: tuple
    fractions: np.ndarray

    def __post_init__(self):
        self.stages = tuple(int(t) for t in self.stages)
        self.fractions = np.asarray(self.fractions, dtype=float)
        if any(t < 0 for t in self.stages):
            raise ValueError("cutting stages must be nonnegative")
        if any(b >= c for b, c in zip(self.stages, self.stages[1:])):
            raise ValueError("cutting stages must be strictly increasing")
        if self.fractions.ndim != 2 or self.fractions.shape[0] != len(self.stages):
            raise ValueError("fractions must have one row per cutting stage")
        if self.fractions.size and (
            self.fractions.min() < 0.0 or self.fractions.max() > 1.0
        ):
            raise ValueError("harvest fractions must lie in [0, 1]")

    @property
    def n_controls(self) -> int:
        return self.fractions.size

    def to_dense(self, horizon: int) -> np.ndarray:
        """Scatter the rows into a (horizon, n) array, zero elsewhere."""
        if self.stages and self.stages[-1] >= horizon:
            raise ValueError("cutting stage beyond the horizon")
        dense = np.zeros((horizon, self.fractions.shape[1]))
        if self.stages:
            dense[list(self.stages)] = self.fractions
        return dense


@dataclass(frozen=True)
class SolverOptions:
    """Tuning knobs of the fitness solver; defaults reproduce the base setup."""

    multistarts: int = presets.NLP_DEFAULTS["multistarts"]
    constraint_tol: float = presets.NLP_DEFAULTS["constraint_tol"]
    stationarity_tol: float = presets.NLP_DEFAULTS["stationarity_tol"]
    max_outer: int = presets.NLP_DEFAULTS["max_outer"]
    max_inner: int = presets.NLP_DEFAULTS["max_inner"]
    penalty_init: float = presets.NLP_DEFAULTS["penalty_init"]
    penalty_growth: float = presets.NLP_DEFAULTS["penalty_growth"]
    smoothing_eps: float = presets.NLP_DEFAULTS["smoothing_eps"]
    seed: int = presets.NLP_DEFAULTS["seed"]

    def __post_init__(self):
        if self.multistarts < 1:
            raise ValueError("multistarts must be at least 1")
        for name in ("constraint_tol", "stationarity_tol", "penalty_init",
                     "penalty_growth", "smoothing_eps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(eq=False)
class FitnessResult:
    """Outcome of one fitness evaluation.

    ``npv`` is recomputed with the exact (unsmoothed) hauling cost at the
    returned controls; ``steady_residual`` is the max-norm of the cycle
    defect x(t1) - x(t0). ``solver_status`` is "converged" only when both
    the constraint and stationarity tolerances were met.
    """

    npv: float
    controls: ControlVector
    trajectory: np.ndarray
    harvests: np.ndarray
    steady_residual: float
    solver_status: str
    restarts_used: int
    outer_iterations: int = 0
    pg_norm: float = math.nan


def _unit_prices(table, econ):
    """Per-tree revenue and cutting cost, and the folded hauling constants."""
    rev_unit = table.v1 * econ.p1 + table.v2 * econ.p2
    cut_unit = econ.C1 * (CUT_C0 + CUT_C1 * table.v + CUT_C2 * table.v**2)
    haul_lin = econ.C2 * HAUL_LIN
    haul_pow = econ.C2 * HAUL_POW
    fix_cost = econ.C2 * HAUL_FIXED + econ.Cf
    return rev_unit, cut_unit, haul_lin, haul_pow, fix_cost


def _pack(table, growth, econ):
    """Positional argument tuple shared by the forward/adjoint kernels."""
    rev_unit, cut_unit, haul_lin, haul_pow, fix_cost = _unit_prices(table, econ)
    trend = 0.02 * (
        17.839
        + 0.0476 * table.d
        - 11.585e-5 * table.d**2
        + 0.906 * growth.site_index
        - 0.268 * growth.latitude
    )
    model = (
        np.ascontiguousarray(table.b),
        np.ascontiguousarray(trend),
        np.ascontiguousarray(table.mortality_scale),
        np.ascontiguousarray(table.v),
        np.ascontiguousarray(rev_unit),
        np.ascontiguousarray(cut_unit),
        float(growth.S1),
        float(growth.S2),
        float(growth.gamma),
        float(growth.nu),
        float(growth.B0),
        float(growth.m),
        float(growth.A1),
        float(growth.A2),
    )
    return model, float(haul_lin), float(haul_pow), float(fix_cost)


def _adjoint_model(model):
    """The subset of the kernel model tuple the reverse sweep consumes
    (it reads mortality and upgrowth shares from the forward records, so
    the trend and mortality-scale columns drop out)."""
    return (model[0], model[3], model[4], model[5]) + model[6:]


def cycle_multiplier(econ, t0: int, t1: int) -> float:
    """Geometric-series factor valuing an endlessly repeated cycle."""
    if t1 <= t0:
        raise ValueError("cycle must cover at least one stage")
    return 1.0 / (1.0 - econ.beta ** ((t1 - t0) * econ.delta_years))


def _stage_weights(econ, t0: int, t1: int) -> np.ndarray:
    """Discount weight of each stage's cash flow in the objective."""
    w = econ.beta ** (econ.delta_years * np.arange(t1, dtype=float))
    w[t0:] *= cycle_multiplier(econ, t0, t1)
    return w


def _delta_array(genotype: ScheduleGenotype) -> np.ndarray:
    return np.asarray(genotype.delta_sequence(genotype.t1), dtype=np.int64)


def model_fingerprint(cfg, opts: SolverOptions | None = None) -> str:
    """Stable hex digest of everything that determines a fitness value."""
    h = hashlib.sha256()
    table = cfg.size_classes
    for arr in (table.b, table.d, table.v1, table.v2):
        h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
    for name in ("S1", "S2", "gamma", "nu", "B0", "m", "A1", "A2",
                 "site_index", "latitude"):
        h.update(repr(float(getattr(cfg.growth, name))).encode())
    for name in ("p1", "p2", "C1", "C2", "Cf", "r", "delta_years"):
        h.update(repr(float(getattr(cfg.econ, name))).encode())
    h.update(np.ascontiguousarray(cfg.initial_state, dtype=float).tobytes())
    if opts is not None:
        for name in ("multistarts", "constraint_tol", "stationarity_tol",
                     "max_outer", "max_inner", "penalty_init",
                     "penalty_growth", "smoothing_eps", "seed"):
            h.update(repr(getattr(opts, name)).encode())
    return h.hexdigest()[:16]


def _require_matching_controls(genotype: ScheduleGenotype, u: ControlVector, n: int):
    stages = tuple(genotype.harvest_stages())
    if u.stages != stages:
        raise ValueError(
            f"control stages {u.stages} do not match the schedule's cutting "
            f"stages {stages}"
        )
    if u.fractions.shape != (len(stages), n):
        raise ValueError("control row length does not match the class count")


def npv_finite(cfg, genotype: ScheduleGenotype, u: ControlVector,
               smoothing: float = 0.0):
    """Objective value of a schedule under given controls, plus the
    trajectory and harvest count arrays it induces.

    The value is sum(beta^(t dy) c_t) over the transition plus the cycle
    cash flows scaled by the repeat factor; the steady-state condition is
    *not* imposed here. ``smoothing`` is the hauling smoothing epsilon used
    by the optimizer; the default 0 gives exact cash flows.
    """
    table = cfg.size_classes
    _require_matching_controls(genotype, u, table.n)
    model, haul_lin, haul_pow, fix_cost = _pack(table, cfg.growth, cfg.econ)
    weights = _stage_weights(cfg.econ, genotype.t0, genotype.t1)
    dense = u.to_dense(genotype.t1)
    value, X, H = forward_sweep(
        np.ascontiguousarray(cfg.initial_state, dtype=float),
        dense, _delta_array(genotype), weights, *model,
        haul_lin, haul_pow, fix_cost, float(smoothing),
    )[:3]
    return float(value), X, H


def steady_residual(trajectory: np.ndarray, t0: int, t1: int) -> np.ndarray:
    """Cycle defect x(t1) - x(t0), componentwise."""
    if trajectory.shape[0] <= t1:
        raise ValueError("trajectory does not cover the cycle end")
    return trajectory[t1] - trajectory[t0]


def random_initial_controls(cfg, genotype: ScheduleGenotype, seed) -> ControlVector:
    """Starting controls drawn the way the search expects them.

    Small classes (1-based index up to 5) start uncut; above that, the
    *retained* share shrinks by an independent U(0,1) factor per class, so
    the harvested share 1 - eta is nondecreasing in class. Draws advance
    stage by stage, class by class, so a fixed seed gives a fixed vector.
    """
    rng = np.random.default_rng(seed)
    n = cfg.size_classes.n
    stages = tuple(genotype.harvest_stages())
    cutoff = min(INIT_UNHARVESTED_CLASSES, n)
    fractions = np.zeros((len(stages), n))
    for row in range(len(stages)):
        eta = 1.0
        for i in range(cutoff, n):
            eta *= rng.random()
            fractions[row, i] = 1.0 - eta
    return ControlVector(stages, fractions)


def gradient(cfg, genotype: ScheduleGenotype, u: ControlVector,
             smoothing: float = presets.NLP_DEFAULTS["smoothing_eps"]) -> np.ndarray:
    """d(objective)/d(fractions), same shape as ``u.fractions``.

    Computed by one forward and one reverse sweep; ``smoothing`` must be
    positive so the hauling derivative is finite at zero volume.
    """
    if smoothing <= 0:
        raise ValueError("gradient requires a positive smoothing epsilon")
    table = cfg.size_classes
    _require_matching_controls(genotype, u, table.n)
    model, haul_lin, haul_pow, fix_cost = _pack(table, cfg.growth, cfg.econ)
    weights = _stage_weights(cfg.econ, genotype.t0, genotype.t1)
    delta = _delta_array(genotype)
    dense = u.to_dense(genotype.t1)
    eps = float(smoothing)
    _, X, _, _, VOL, MU, AL, REG, PRE, BTOT = forward_sweep(
        np.ascontiguousarray(cfg.initial_state, dtype=float),
        dense, delta, weights, *model, haul_lin, haul_pow, fix_cost, eps,
    )
    zero = np.zeros(table.n)
    grad_dense, _ = adjoint_sweep(
        dense, delta, weights, zero, genotype.t0,
        X, MU, AL, REG, PRE, BTOT, VOL,
        *_adjoint_model(model), haul_lin, haul_pow, eps,
    )
    # the sweep differentiates -objective; flip and keep the control rows
    return -grad_dense[list(u.stages)]


class FitnessCache:
    """Memo table keyed by (model fingerprint, genotype key).

    ``misses`` counts actual solves, which is what evaluation budgets
    meter; lookups of already-solved genotypes are free.
    """

    def __init__(self):
        self._data: dict = {}
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._data)

    def contains(self, fingerprint: str, key: str) -> bool:
        return (fingerprint, key) in self._data

    def get_or_compute(self, fingerprint: str, key: str, compute):
        slot = (fingerprint, key)
        if slot in self._data:
            self.hits += 1
            return self._data[slot]
        self.misses += 1
        result = compute()
        self._data[slot] = result
        return result


def _start_seed(seed: int, key: str, start: int) -> int:
    digest = hashlib.sha256(f"{seed}|{key}|{start}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _al_closures(x0, stages_arr, delta, weights, model, haul_lin, haul_pow,
                 fix_cost, eps, t0, t1, n, lam, rho):
    """Value-and-gradient and value-only callbacks for one multiplier state."""
    H = stages_arr.shape[0]

    def scatter(z):
        dense = np.zeros((t1, n))
        dense[stages_arr] = z.reshape(H, n)
        return dense

    def penalized(value, X):
        defect = X[t1] - X[t0]
        return (
            -value + lam @ defect + 0.5 * rho * (defect @ defect),
            defect,
        )

    def value_grad(z):
        dense = scatter(z)
        value, X, _, _, VOL, MU, AL, REG, PRE, BTOT = forward_sweep(
            x0, dense, delta, weights, *model, haul_lin, haul_pow, fix_cost, eps
        )
        phi, defect = penalized(value, X)
        wprime = lam + rho * defect
        grad_dense, _ = adjoint_sweep(
            dense, delta, weights, wprime, t0,
            X, MU, AL, REG, PRE, BTOT, VOL,
            *_adjoint_model(model), haul_lin, haul_pow, eps,
        )
        return phi, grad_dense[stages_arr].ravel()

    def value_only(z):
        out = forward_sweep(
            x0, scatter(z), delta, weights, *model,
            haul_lin, haul_pow, fix_cost, eps,
        )
        return penalized(out[0], out[1])[0]

    return value_grad, value_only


def evaluate_fitness(cfg, genotype: ScheduleGenotype,
                     opts: SolverOptions | None = None,
                     cache: FitnessCache | None = None) -> FitnessResult:
    """Best objective value for a schedule, subject to the cycle returning
    to its starting state.

    Runs ``opts.multistarts`` independent starts; each start solves a
    sequence of box-constrained penalized problems, tightening the penalty
    until the cycle defect and the projected gradient are below their
    scale-relative tolerances. The best converged start wins; if none
    converges the best effort is returned with status "failed".
    """
    if opts is None:
        opts = SolverOptions()
    if "1" not in genotype.cycle_bits:
        raise ValueError("the cycle must cut at least one stage")
    if cache is not None:
        fingerprint = model_fingerprint(cfg, opts)
        return cache.get_or_compute(
            fingerprint, genotype.key(),
            lambda: _solve_fitness(cfg, genotype, opts),
        )
    return _solve_fitness(cfg, genotype, opts)


def _solve_fitness(cfg, genotype: ScheduleGenotype,
                   opts: SolverOptions) -> FitnessResult:
    table = cfg.size_classes
    n = table.n
    t0, t1 = genotype.t0, genotype.t1
    stages = tuple(genotype.harvest_stages())
    stages_arr = np.asarray(stages, dtype=np.int64)
    model, haul_lin, haul_pow, fix_cost = _pack(table, cfg.growth, cfg.econ)
    weights = _stage_weights(cfg.econ, t0, t1)
    delta = _delta_array(genotype)
    x0 = np.ascontiguousarray(cfg.initial_state, dtype=float)
    eps = float(opts.smoothing_eps)
    H = len(stages)
    lower = np.zeros(H * n)
    upper = np.ones(H * n)

    def forward_at(z, eps_):
        dense = np.zeros((t1, n))
        dense[stages_arr] = z.reshape(H, n)
        return forward_sweep(
            x0, dense, delta, weights, *model,
            haul_lin, haul_pow, fix_cost, eps_,
        )

    best = None
    for start in range(opts.multistarts):
        u0 = random_initial_controls(
            cfg, genotype, _start_seed(opts.seed, genotype.key(), start)
        )
        z = u0.fractions.ravel().copy()
        lam = np.zeros(n)
        rho = opts.penalty_init
        prev_defect = math.inf
        status = "failed"
        pg = math.inf
        outers = 0
        out = forward_at(z, eps)
        value, X = out[0], out[1]
        for outer in range(opts.max_outer):
            loose = 100.0 if outer == 0 else (10.0 if outer == 1 else 1.0)
            gtol = opts.stationarity_tol * (1.0 + abs(value)) * loose
            vg, vonly = _al_closures(
                x0, stages_arr, delta, weights, model, haul_lin, haul_pow,
                fix_cost, eps, t0, t1, n, lam, rho,
            )
            res = minimize_box(vg, z, lower, upper, value=vonly,
                               pg_tol=gtol, max_iter=opts.max_inner)
            z = res.x
            out = forward_at(z, eps)
            value, X = out[0], out[1]
            defect = X[t1] - X[t0]
            dnorm = float(np.max(np.abs(defect)))
            outers = outer + 1
            pg = res.pg_norm
            ctol = opts.constraint_tol * (1.0 + float(np.max(np.abs(X[t0]))))
            if dnorm <= ctol and pg <= opts.stationarity_tol * (1.0 + abs(value)):
                status = "converged"
                break
            lam = lam + rho * defect
            if dnorm > 0.25 * prev_defect:
                rho *= opts.penalty_growth
            prev_defect = dnorm
        exact = forward_at(z, 0.0)
        candidate = (status == "converged", float(exact[0]), z, status,
                     outers, pg)
        # converged beats failed; then higher exact value wins
        if best is None or (candidate[0], candidate[1]) > (best[0], best[1]):
            best = candidate
    _, _, z, status, outers, pg = best
    exact_value, X, Harr = forward_at(z, 0.0)[:3]
    controls = ControlVector(stages, z.reshape(H, n))
    residual = float(np.max(np.abs(X[t1] - X[t0]))) if H else math.inf
    return FitnessResult(
        npv=float(exact_value),
        controls=controls,
        trajectory=X,
        harvests=Harr,
        steady_residual=residual,
        solver_status=status,
        restarts_used=opts.multistarts,
        outer_iterations=outers,
        pg_norm=float(pg),
    )
