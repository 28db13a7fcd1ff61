"""Branch-and-bound search over cycle timing and harvest flags.

The search partitions the inclusive index box of (cycle start, cycle length)
by halving ranges, then pins per-stage harvest flags one at a time. Each node
is bounded by the locally solved relaxation from :mod:`standopt.mip`; nodes
whose timing indicators came out integral are scored exactly with the fitness
evaluator, which is also what every incumbent value is based on.

Because the relaxation solves are local, node bounds are heuristic: a bound
is only trusted when its solve fully converged, pruning keeps a relative
safety margin, and anything unresolved is branched instead of discarded. The
incumbent is therefore always a genuine, exactly evaluated schedule, even
when pruning was too optimistic elsewhere.

Branching order is timing first: split the start range while it spans more
than one stage, then the length range, then fix the most fractional harvest
flag (ties to the earliest stage). Range splits cut at the midpoint, e.g.
[10, 25] into [10, 17] and [18, 25]. The frontier is explored best bound
first, ties going to the deeper node.

Once both timing ranges are singletons and few harvest flags remain free,
the node's completions are enumerated with exact fitness evaluations instead
of recursing: at that density the relaxation solves cost more than scoring
every leaf, and the weak fractional bounds rarely prune anything below.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field

from .fitness import FitnessResult, SolverOptions, _start_seed, evaluate_fitness
from .ga import selection_fitness
from .mip import (PRUNE_MARGIN, BranchNode, MipStructure, root_node,
                  solve_relaxation)
from .schedule import ScheduleBounds, ScheduleGenotype

#: frontier size beyond which warm-start vectors are dropped to save memory
WARM_STORE_CAP = 20_000

#: with singleton timing ranges and at most this many free harvest flags,
#: a node is finished by enumerating its completions exactly
DENSE_BOX_BITS = 10


@dataclass(frozen=True)
class BnbLimits:
    """Stopping rules: frontier size cap and optional call budget."""

    max_active_nodes: int = 100_000
    max_nlp_calls: int = 0  # 0 means unlimited

    def __post_init__(self):
        if self.max_active_nodes < 1 or self.max_nlp_calls < 0:
            raise ValueError("limits must be positive (0 = unlimited calls)")


@dataclass(eq=False)
class BnbResult:
    """Search outcome. ``termination`` is "NOR" when the frontier was
    exhausted, "NAN" when the active-node cap was hit, and "NCO" when the
    call budget ran out."""

    best_genotype: ScheduleGenotype
    best_result: FitnessResult
    termination: str
    nodes_created: int
    nodes_expanded: int
    nodes_pruned: int
    nlp_calls: int
    wall_time: float
    log: list = field(default_factory=list)

    @property
    def incumbent(self) -> float:
        if self.best_result is None:
            return -math.inf
        return self.best_result.npv


class _Search:
    def __init__(self, cfg, bounds, opts, limits, seed):
        self.cfg = cfg
        self.bounds = bounds
        self.opts = opts
        self.limits = limits
        self.seed = seed
        self.struct = MipStructure(cfg, bounds)
        self.heap = []
        self.seq = 0
        self.calls = 0
        self.created = 0
        self.expanded = 0
        self.pruned = 0
        self.best = None
        self.best_genotype = None
        self.log = []
        self.truncated = False

    # -- bookkeeping ---------------------------------------------------------

    def _log(self, node_id, parent, node, bound, status, action):
        self.log.append({
            "node": node_id, "parent": parent,
            "t_lo": node.t_lo, "t_hi": node.t_hi,
            "s_lo": node.s_lo, "s_hi": node.s_hi,
            "n_fixed": len(node.delta_fixed),
            "bound": bound, "status": status, "action": action,
            "incumbent": self.incumbent_value(), "nlp_calls": self.calls,
        })

    def incumbent_value(self) -> float:
        return -math.inf if self.best is None else self.best.npv

    def _prunable(self, bound: float) -> bool:
        incumbent = self.incumbent_value()
        return bound <= incumbent - PRUNE_MARGIN * abs(incumbent)

    def _node_seed(self, node: BranchNode) -> int:
        key = (f"{node.t_lo}-{node.t_hi}-{node.s_lo}-{node.s_hi}-"
               + ",".join(f"{t}:{v}" for t, v in sorted(node.delta_fixed)))
        return _start_seed(self.seed, key, 0)

    def _budget_left(self) -> bool:
        return (self.limits.max_nlp_calls == 0
                or self.calls < self.limits.max_nlp_calls)

    # -- evaluation ----------------------------------------------------------

    def _score_leaf(self, node_id, parent, node, genotype, bound):
        """Exact fitness evaluation of one schedule; may update the incumbent."""
        self.calls += 1
        result = evaluate_fitness(self.cfg, genotype, self.opts, cache=None)
        fitness = selection_fitness(result)
        if fitness > (-math.inf if self.best is None
                      else selection_fitness(self.best)):
            self.best = result
            self.best_genotype = genotype
        action = "leaf" if result.solver_status == "converged" else "leaf-failed"
        self._log(node_id, parent, node, bound, result.solver_status, action)

    def _solve_node(self, node, parent_payload):
        warm, warm_T = parent_payload
        relax, prob = solve_relaxation(
            self.struct, node, self.opts, warm=warm, warm_horizon=warm_T,
            seed=self._node_seed(node))
        self.calls += relax.attempts
        return relax, prob

    # -- main loop -----------------------------------------------------------

    def run(self) -> str:
        root = root_node(self.bounds)
        self._push_child(root, parent=None, payload=(None, None))
        while self.heap:
            if not self._budget_left():
                return "NCO"
            if len(self.heap) > self.limits.max_active_nodes:
                return "NAN"
            _, _, node_id, parent, node, relax, prob = heapq.heappop(self.heap)
            bound = relax.value if relax.status == "converged" else math.inf
            if self._prunable(bound):
                self.pruned += 1
                self._log(node_id, parent, node, bound, relax.status, "prune")
                continue
            self.expanded += 1
            assignment = (prob.assignment(relax.z)
                          if relax.status != "failed" else None)
            integral = assignment is not None and assignment.integral
            if integral and relax.status == "converged" \
                    and not assignment.empty_cycle:
                # the trusted bound is attained at an integral point, so the
                # box holds nothing better than this schedule
                self._score_leaf(node_id, parent, node,
                                 assignment.genotype, bound)
                continue
            if integral and assignment.empty_cycle:
                # a cycle with no harvest is not a schedule; the bound still
                # caps the box's valid completions, so keep the box open
                self._log(node_id, parent, node, bound, relax.status,
                          "leaf-empty")
                integral = False
            if self._enumerable(node):
                self._enumerate_box(node_id, parent, node, bound,
                                    relax.status)
                continue
            if integral:
                # untrusted bound, but the relaxation still suggests a
                # concrete schedule: score it before descending
                self._score_leaf(node_id, parent, node,
                                 assignment.genotype, bound)
            if not self._branch(node_id, parent, node, relax, prob, bound):
                self._log(node_id, parent, node, bound, relax.status,
                          "exhausted")
        return "NCO" if self.truncated else "NOR"

    def _enumerable(self, node) -> bool:
        free = node.t_lo + node.s_lo - len(node.delta_fixed)
        return (node.t_lo == node.t_hi and node.s_lo == node.s_hi
                and free <= DENSE_BOX_BITS)

    def _enumerate_box(self, node_id, parent, node, bound, status):
        """Score every completion of a dense, timing-fixed node exactly."""
        t_len, s_len = node.t_lo, node.s_lo
        fixed = dict(node.delta_fixed)
        positions = [t for t in range(t_len + s_len) if t not in fixed]
        self._log(node_id, parent, node, bound, status, "enumerate")
        for combo in itertools.product((0, 1), repeat=len(positions)):
            if not self._budget_left():
                self.truncated = True
                return
            values = dict(zip(positions, combo))
            values.update(fixed)
            bits = "".join(str(values[t]) for t in range(t_len + s_len))
            if "1" not in bits[t_len:]:
                continue  # empty steady-state cycle: not a schedule
            self.created += 1
            leaf = BranchNode(t_len, t_len, s_len, s_len,
                              tuple(sorted(values.items())), node.depth + 1)
            self._score_leaf(self.created, node_id, leaf,
                             ScheduleGenotype(bits[:t_len], bits[t_len:]),
                             bound=bound)

    def _branch(self, node_id, parent, node, relax, prob, bound) -> bool:
        children, action = _split(node, relax, prob)
        if children is None:
            return False
        payload = ((relax.z, prob.T)
                   if len(self.heap) < WARM_STORE_CAP else (None, None))
        self._log(node_id, parent, node, bound, relax.status, action)
        for child in children:
            if not self._budget_left():
                self.truncated = True
                break
            self._push_child(child, parent=node_id, payload=payload)
        return True

    def _push_child(self, node, parent, payload):
        self.created += 1
        node_id = self.created
        if node.fully_fixed:
            genotype = node.genotype()
            if "1" not in genotype.cycle_bits:
                self._log(node_id, parent, node, -math.inf, "fixed",
                          "leaf-empty")
                return
            self._score_leaf(node_id, parent, node, genotype,
                             bound=math.inf)
            return
        relax, prob = self._solve_node(node, payload)
        bound = relax.value if relax.status == "converged" else math.inf
        if self._prunable(bound):
            self.pruned += 1
            self._log(node_id, parent, node, bound, relax.status, "prune")
            return
        self.seq += 1
        heapq.heappush(self.heap, (-bound, -node.depth, node_id, parent,
                                   node, relax, prob))


def _split(node: BranchNode, relax, prob):
    """Children of one node, timing ranges first, then harvest flags."""
    if node.t_lo < node.t_hi:
        mid = (node.t_lo + node.t_hi) // 2
        return ([_shrunk(node, t_lo=node.t_lo, t_hi=mid),
                 _shrunk(node, t_lo=mid + 1, t_hi=node.t_hi)], "branch-t")
    if node.s_lo < node.s_hi:
        mid = (node.s_lo + node.s_hi) // 2
        return ([_shrunk(node, s_lo=node.s_lo, s_hi=mid),
                 _shrunk(node, s_lo=mid + 1, s_hi=node.s_hi)], "branch-s")
    fixed = dict(node.delta_fixed)
    free = [t for t in range(node.t_lo + node.s_lo) if t not in fixed]
    if not free:
        return None, None
    d = prob.layout.views(relax.z)["d"]
    t_star = min(free, key=lambda t: (abs(float(d[t]) - 0.5), t))
    children = []
    for value in (1, 0):
        deltas = tuple(sorted(fixed.items())) + ((t_star, value),)
        children.append(BranchNode(node.t_lo, node.t_hi, node.s_lo,
                                   node.s_hi, tuple(sorted(deltas)),
                                   node.depth + 1))
    return children, "branch-d"


def _shrunk(node: BranchNode, **changes) -> BranchNode:
    fields_ = {"t_lo": node.t_lo, "t_hi": node.t_hi,
               "s_lo": node.s_lo, "s_hi": node.s_hi}
    fields_.update(changes)
    horizon = fields_["t_hi"] + fields_["s_hi"]
    deltas = tuple((t, v) for t, v in node.delta_fixed if t < horizon)
    return BranchNode(fields_["t_lo"], fields_["t_hi"], fields_["s_lo"],
                      fields_["s_hi"], deltas, node.depth + 1)


def run_bnb(cfg, bounds: ScheduleBounds = None, opts: SolverOptions = None,
            limits: BnbLimits = None, seed: int = None) -> BnbResult:
    """Full tree search; returns the exactly evaluated best schedule found.

    ``opts``/``bounds``/``seed`` default to the configuration's settings.
    Fitness results are never shared with other runs: every leaf is evaluated
    afresh so the call counter reflects the true amount of solver work.
    """
    bounds = bounds if bounds is not None else cfg.bounds
    opts = opts if opts is not None else getattr(cfg, "nlp", None) or SolverOptions()
    limits = limits if limits is not None else BnbLimits()
    if seed is None:
        seed = getattr(getattr(cfg, "ga", None), "seed", 0)
    search = _Search(cfg, bounds, opts, limits, seed)
    start = time.perf_counter()
    termination = search.run()
    wall = time.perf_counter() - start
    return BnbResult(
        best_genotype=search.best_genotype,
        best_result=search.best,
        termination=termination,
        nodes_created=search.created,
        nodes_expanded=search.expanded,
        nodes_pruned=search.pruned,
        nlp_calls=search.calls,
        wall_time=wall,
        log=search.log,
    )
