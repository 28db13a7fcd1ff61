"""Genetic search over cutting schedules.

Each member of the population is a variable-length binary schedule; its
fitness is the best achievable discounted value as computed by
:func:`standopt.fitness.evaluate_fitness`. One generation selects two
parents by tournament, recombines them with a single cut point, applies
bit-flip and length mutations, evaluates the two offspring, and lets them
compete against a small random pool for places in the population.

Schedules whose fitness solve could not close the cycle get a selection
fitness of minus infinity: they keep their best-effort value for reporting
but cannot propagate.

The search budget is metered in fitness-solver calls; repeated evaluations
of a schedule already in the cache are free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import presets
from .fitness import (
    FitnessCache,
    FitnessResult,
    SolverOptions,
    evaluate_fitness,
    model_fingerprint,
)
from .schedule import ScheduleBounds, ScheduleGenotype

__all__ = [
    "GaConfig",
    "GaRunResult",
    "GenerationStat",
    "Population",
    "crossover",
    "init_population",
    "mutate_bits",
    "mutate_length",
    "random_genotype",
    "replace",
    "run_ga",
    "selection_fitness",
    "tournament_select",
]


@dataclass(frozen=True)
class GaConfig:
    """Search parameters; the defaults are the standard setup."""

    population: int = presets.GA_DEFAULTS["population"]
    crossover_prob: float = presets.GA_DEFAULTS["crossover_prob"]
    mutation_prob: float = presets.GA_DEFAULTS["mutation_prob"]
    replacement_pool: int = presets.GA_DEFAULTS["replacement_pool"]
    max_generations: int = presets.GA_DEFAULTS["max_generations"]
    nlp_call_budget: int = presets.GA_DEFAULTS["nlp_call_budget"]
    seed: int = presets.GA_DEFAULTS["seed"]
    bounds: ScheduleBounds = field(default_factory=ScheduleBounds)

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must have at least two members")
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise ValueError("crossover_prob must lie in [0, 1]")
        if not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("mutation_prob must lie in [0, 1]")
        if not 1 <= self.replacement_pool <= self.population:
            raise ValueError(
                "replacement_pool must lie between 1 and the population size"
            )
        if self.max_generations < 0 or self.nlp_call_budget < 0:
            raise ValueError("limits must be nonnegative")


def selection_fitness(result: FitnessResult) -> float:
    """Ordering key used by selection and replacement: the value when the
    cycle closed, minus infinity otherwise."""
    if result.solver_status == "converged":
        return result.npv
    return -math.inf


@dataclass
class Population:
    """Evaluated members, a fixed-size list of (genotype, fitness) pairs."""

    members: list

    @property
    def size(self) -> int:
        return len(self.members)

    def best(self):
        """The member with the highest selection fitness (first on ties)."""
        return max(self.members, key=lambda m: selection_fitness(m[1]))

    def mean_npv(self) -> float:
        return float(np.mean([r.npv for _, r in self.members]))


@dataclass(frozen=True)
class GenerationStat:
    generation: int
    best_npv: float
    mean_npv: float
    nlp_calls: int
    best_key: str


@dataclass
class GaRunResult:
    best_genotype: ScheduleGenotype
    best_result: FitnessResult
    log: list
    nlp_calls: int
    termination: str  # "NCO" when the call budget bound, "GEN" otherwise
    population: Population


def random_genotype(rng, bounds: ScheduleBounds) -> ScheduleGenotype:
    """Uniform random lengths within bounds, fair-coin bits, repaired."""
    t_len = int(rng.integers(bounds.t_min, bounds.t_max + 1))
    s_len = int(rng.integers(bounds.s_min, bounds.s_max + 1))
    trans = "".join("1" if rng.random() < 0.5 else "0" for _ in range(t_len))
    cyc = "".join("1" if rng.random() < 0.5 else "0" for _ in range(s_len))
    return ScheduleGenotype(trans, cyc).repaired(rng)


def init_population(cfg, ga: GaConfig, opts: SolverOptions | None = None,
                    cache: FitnessCache | None = None,
                    rng=None) -> Population:
    """Draw and evaluate the starting population."""
    if rng is None:
        rng = np.random.default_rng(ga.seed)
    if opts is None:
        opts = getattr(cfg, "nlp", None) or SolverOptions()
    members = []
    for _ in range(ga.population):
        g = random_genotype(rng, ga.bounds)
        members.append((g, evaluate_fitness(cfg, g, opts, cache=cache)))
    return Population(members)


def tournament_select(pop: Population, rng) -> ScheduleGenotype:
    """Draw two distinct members; the fitter one's genotype is the parent,
    with exact ties split by a fair coin."""
    if pop.size < 2:
        raise ValueError("tournament selection needs at least two members")
    i, j = rng.choice(pop.size, size=2, replace=False)
    fi = selection_fitness(pop.members[i][1])
    fj = selection_fitness(pop.members[j][1])
    if fi == fj:
        return pop.members[i if rng.integers(2) == 0 else j][0]
    return pop.members[i][0] if fi > fj else pop.members[j][0]


def _crossover_at(pa: ScheduleGenotype, pb: ScheduleGenotype, k: int):
    """Swap everything after position k of the full strings: each child
    keeps one parent's first k transition bits and takes the rest of the
    other parent's transition plus its entire cycle."""
    c1 = ScheduleGenotype(
        pa.transition_bits[:k] + pb.transition_bits[k:], pb.cycle_bits
    )
    c2 = ScheduleGenotype(
        pb.transition_bits[:k] + pa.transition_bits[k:], pa.cycle_bits
    )
    return c1, c2


def crossover(pa: ScheduleGenotype, pb: ScheduleGenotype, p_c: float, rng):
    """Single-point recombination; the cut point lies strictly inside the
    shorter transition, so both children keep a nonempty prefix and suffix.

    With probability 1 - p_c (or when either transition is a single stage)
    the children are plain copies.
    """
    shorter = min(pa.t_len, pb.t_len)
    if rng.random() >= p_c or shorter < 2:
        return pa, pb
    k = int(rng.integers(1, shorter))
    return _crossover_at(pa, pb, k)


def mutate_bits(g: ScheduleGenotype, p_m: float, rng) -> ScheduleGenotype:
    """Flip each bit independently with probability p_m, then repair."""
    bits = list(g.transition_bits + g.cycle_bits)
    for idx in range(len(bits)):
        if rng.random() < p_m:
            bits[idx] = "1" if bits[idx] == "0" else "0"
    flat = "".join(bits)
    out = ScheduleGenotype(flat[: g.t_len], flat[g.t_len:])
    return out.repaired(rng)


def _resize(bits: str, lo: int, hi: int, rng) -> str:
    """Grow or shrink one string by a single position, honoring bounds."""
    grow = rng.random() < 0.5
    if grow and len(bits) + 1 > hi:
        grow = False
    if not grow and len(bits) - 1 < lo:
        if len(bits) + 1 > hi:
            return bits  # both directions blocked
        grow = True
    if grow:
        pos = int(rng.integers(0, len(bits) + 1))
        new_bit = "1" if rng.random() < 0.5 else "0"
        return bits[:pos] + new_bit + bits[pos:]
    pos = int(rng.integers(0, len(bits)))
    return bits[:pos] + bits[pos + 1:]


def mutate_length(g: ScheduleGenotype, p_m: float, rng,
                  bounds: ScheduleBounds) -> ScheduleGenotype:
    """With probability p_m each, resize the transition and the cycle by
    one stage (up or down equiprobably; a move that would leave the bounds
    becomes the opposite move). Repaired afterwards."""
    trans = g.transition_bits
    cyc = g.cycle_bits
    if rng.random() < p_m:
        trans = _resize(trans, bounds.t_min, bounds.t_max, rng)
    if rng.random() < p_m:
        cyc = _resize(cyc, bounds.s_min, bounds.s_max, rng)
    return ScheduleGenotype(trans, cyc).repaired(rng)


def replace(pop: Population, offspring: list, lam: int, rng) -> Population:
    """Pool lam random members with the offspring; the best lam of the pool
    take the drawn members' places (drawn members win exact ties)."""
    if lam > pop.size:
        raise ValueError("replacement pool larger than the population")
    slots = sorted(int(i) for i in rng.choice(pop.size, size=lam, replace=False))
    pool = [(selection_fitness(r), 1, g, r) for g, r in (pop.members[i] for i in slots)]
    pool += [(selection_fitness(r), 0, g, r) for g, r in offspring]
    pool.sort(key=lambda e: (e[0], e[1]), reverse=True)
    members = list(pop.members)
    for slot, entry in zip(slots, pool[:lam]):
        members[slot] = (entry[2], entry[3])
    return Population(members)


def run_ga(cfg, ga: GaConfig | None = None,
           opts: SolverOptions | None = None,
           cache: FitnessCache | None = None) -> GaRunResult:
    """Full search loop: initialize, then breed until the generation limit
    or the fitness-call budget is reached.

    A generation whose offspring cannot all be evaluated within the budget
    performs no replacement. Everything is driven by one seeded generator,
    so a fixed (cfg, ga, opts) triple reproduces the run bit for bit.
    """
    if ga is None:
        ga = getattr(cfg, "ga", None) or GaConfig()
    if opts is None:
        opts = getattr(cfg, "nlp", None) or SolverOptions()
    if cache is None:
        cache = FitnessCache()
    rng = np.random.default_rng(ga.seed)
    fingerprint = model_fingerprint(cfg, opts)

    pop = init_population(cfg, ga, opts, cache, rng)
    best_g, best_r = pop.best()
    log = [GenerationStat(0, best_r.npv, pop.mean_npv(), cache.misses,
                          best_g.key())]

    def budgeted_eval(g):
        if not cache.contains(fingerprint, g.key()) and \
                cache.misses >= ga.nlp_call_budget:
            return None
        return evaluate_fitness(cfg, g, opts, cache=cache)

    generation = 0
    interrupted = False
    while generation < ga.max_generations and \
            cache.misses < ga.nlp_call_budget:
        generation += 1
        pa = tournament_select(pop, rng)
        pb = tournament_select(pop, rng)
        c1, c2 = crossover(pa, pb, ga.crossover_prob, rng)
        children = []
        for child in (c1, c2):
            child = mutate_bits(child, ga.mutation_prob, rng)
            child = mutate_length(child, ga.mutation_prob, rng, ga.bounds)
            children.append(child)
        evaluated = []
        for child in children:
            result = budgeted_eval(child)
            if result is None:
                interrupted = True
                break
            evaluated.append((child, result))
        if interrupted:
            break
        pop = replace(pop, evaluated, ga.replacement_pool, rng)
        gen_best_g, gen_best_r = pop.best()
        if selection_fitness(gen_best_r) > selection_fitness(best_r):
            best_g, best_r = gen_best_g, gen_best_r
        log.append(GenerationStat(generation, gen_best_r.npv, pop.mean_npv(),
                                  cache.misses, gen_best_g.key()))

    termination = "NCO" if cache.misses >= ga.nlp_call_budget else "GEN"
    return GaRunResult(
        best_genotype=best_g,
        best_result=best_r,
        log=log,
        nlp_calls=cache.misses,
        termination=termination,
        population=pop,
    )
