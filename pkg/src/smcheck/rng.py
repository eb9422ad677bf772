"""Pinned random-number machinery: splitmix64 seed derivation and xoshiro256**.

Every stochastic component in the engine draws from these generators so that
results are bit-reproducible across platforms and worker counts.  Replication
seeds are derived, never drawn: seed(i) is a pure function of the master seed
and the replication index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 finalizer step (a bijection on 64-bit integers)."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class SeedPlan:
    """Derivation plan for replication seeds.

    ``derivation`` names the algorithm; only "splitmix64-counter" exists and
    the field is kept so reports are self-describing.
    """

    master_seed: int
    derivation: str = "splitmix64-counter"

    def __post_init__(self):
        if not 0 <= self.master_seed <= MASK64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.derivation != "splitmix64-counter":
            raise ValueError(f"unknown derivation {self.derivation!r}")

    def seed(self, index: int) -> int:
        return derive_seed(self, index)

    def subplan(self, index: int) -> "SeedPlan":
        """Independent child plan (used e.g. per calibration combo)."""
        return SeedPlan(splitmix64(derive_seed(self, index) ^ 0xA5A5A5A5A5A5A5A5))


def derive_seed(plan: SeedPlan, index: int) -> int:
    """Seed for replication ``index``: splitmix64(master_seed + index).

    Injective for index < 2**64 - since splitmix64 is a bijection and the
    sums are distinct modulo 2**64.
    """
    if index < 0:
        raise ValueError("replication index must be nonnegative")
    return splitmix64((plan.master_seed + index) & MASK64)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


@dataclass
class Xoshiro256StarStar:
    """xoshiro256** 1.0, seeded by expanding a 64-bit seed with splitmix64."""

    s0: int = 0
    s1: int = 0
    s2: int = 0
    s3: int = 0
    _spare_normal: float | None = field(default=None, repr=False)

    @classmethod
    def from_seed(cls, seed: int) -> "Xoshiro256StarStar":
        x = seed & MASK64
        words = []
        for _ in range(4):
            x = (x + 0x9E3779B97F4A7C15) & MASK64
            z = x
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
            words.append(z ^ (z >> 31))
        if not any(words):  # all-zero state is invalid
            words[0] = 1
        return cls(*words)

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s0, self.s1, self.s2, self.s3
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s0, self.s1, self.s2, self.s3 = s0, s1, s2, s3
        return result

    def random(self) -> float:
        """Uniform in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        """Gaussian variate via Box-Muller (spare cached for determinism)."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return mu + sigma * z
        while True:
            u1 = self.random()
            if u1 > 0.0:
                break
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log(u1))
        z0 = r * math.cos(2.0 * math.pi * u2)
        self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return mu + sigma * z0

    def bernoulli(self, p: float) -> bool:
        return self.random() < p

    def binomial(self, n: int, p: float) -> int:
        """Plain inversion-by-summation; fine for the small n of the builtin models."""
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must be in [0, 1]")
        if p == 0.0 or n == 0:
            return 0
        if p == 1.0:
            return n
        return sum(1 for _ in range(n) if self.random() < p)

    def state_tuple(self) -> tuple:
        return (self.s0, self.s1, self.s2, self.s3, self._spare_normal)
