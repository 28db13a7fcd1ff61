"""Harvest-schedule genotypes: a transition bit string followed by a
steady-state cycle bit string.

Stage t < t0 = len(transition) takes its harvest flag from the transition
string; stages t >= t0 repeat the cycle with bit 0 anchored at t0. The cycle
must contain at least one harvest: a harvest-free cycle cannot hold a growing
stand at a steady state, so such genotypes are repaired before evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import presets

_BITS = frozenset("01")


@dataclass(frozen=True)
class ScheduleBounds:
    """Inclusive length bounds for the two genotype strings."""

    t_min: int = presets.BOUNDS_DEFAULTS["t_min"]
    t_max: int = presets.BOUNDS_DEFAULTS["t_max"]
    s_min: int = presets.BOUNDS_DEFAULTS["s_min"]
    s_max: int = presets.BOUNDS_DEFAULTS["s_max"]

    def __post_init__(self):
        if not (1 <= self.t_min <= self.t_max):
            raise ValueError("transition bounds must satisfy 1 <= t_min <= t_max")
        if not (1 <= self.s_min <= self.s_max):
            raise ValueError("cycle bounds must satisfy 1 <= s_min <= s_max")


@dataclass(frozen=True)
class ScheduleGenotype:
    """Immutable pair of binary strings encoding harvest/no-harvest stages."""

    transition_bits: str
    cycle_bits: str

    def __post_init__(self):
        for name, bits in (("transition", self.transition_bits),
                           ("cycle", self.cycle_bits)):
            if not bits or not set(bits) <= _BITS:
                raise ValueError(f"{name} bits must be a nonempty 0/1 string")

    @property
    def t_len(self) -> int:
        return len(self.transition_bits)

    @property
    def s_len(self) -> int:
        return len(self.cycle_bits)

    @property
    def t0(self) -> int:
        """First stage of the steady-state cycle."""
        return self.t_len

    @property
    def t1(self) -> int:
        """End of the first cycle; the finite horizon simulated by fitness."""
        return self.t_len + self.s_len

    def delta_at(self, t: int) -> int:
        """Harvest flag at stage t (cycle repeats forever past t0)."""
        if t < 0:
            raise ValueError("stage index must be nonnegative")
        if t < self.t0:
            return int(self.transition_bits[t])
        return int(self.cycle_bits[(t - self.t0) % self.s_len])

    def delta_sequence(self, length: int) -> np.ndarray:
        """Harvest flags for stages 0..length-1 as an int array."""
        return np.fromiter(
            (self.delta_at(t) for t in range(length)), dtype=np.int64, count=length
        )

    def harvest_stages(self):
        """Stages t < t1 with a harvest flag, in increasing order."""
        return [t for t in range(self.t1) if self.delta_at(t) == 1]

    def validate(self, bounds: ScheduleBounds) -> list[str]:
        """All bound and structure violations; empty list means valid."""
        issues = []
        if self.t_len < bounds.t_min:
            issues.append(f"transition too short ({self.t_len} < {bounds.t_min})")
        if self.t_len > bounds.t_max:
            issues.append(f"transition too long ({self.t_len} > {bounds.t_max})")
        if self.s_len < bounds.s_min:
            issues.append(f"cycle too short ({self.s_len} < {bounds.s_min})")
        if self.s_len > bounds.s_max:
            issues.append(f"cycle too long ({self.s_len} > {bounds.s_max})")
        if "1" not in self.cycle_bits:
            issues.append("empty cycle (no harvest in steady state)")
        return issues

    def repaired(self, rng: np.random.Generator) -> "ScheduleGenotype":
        """Flip one random cycle bit to 1 if the cycle has no harvest."""
        if "1" in self.cycle_bits:
            return self
        pos = int(rng.integers(self.s_len))
        cyc = self.cycle_bits[:pos] + "1" + self.cycle_bits[pos + 1:]
        return ScheduleGenotype(self.transition_bits, cyc)

    def key(self) -> str:
        """Cache key and CLI text form, 'TRANSITION|CYCLE'."""
        return f"{self.transition_bits}|{self.cycle_bits}"


def parse_schedule(text: str) -> ScheduleGenotype:
    """Parse the 'TRANSITION|CYCLE' text form (inverse of key())."""
    parts = text.split("|")
    if len(parts) != 2:
        raise ValueError("schedule text must be 'TRANSITIONBITS|CYCLEBITS'")
    return ScheduleGenotype(parts[0], parts[1])
