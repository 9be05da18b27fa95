"""Reproducible pseudo-random stream based on SplitMix64.

SplitMix64 (Steele, Lea and Flood, "Fast splittable pseudorandom number
generators", OOPSLA 2014; public domain reference code) advances a 64-bit
state and mixes it:

    state = (state + 0x9E3779B97F4A7C15) mod 2^64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2^64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) mod 2^64
    output: z ^ (z >> 31)

Derived draws are pinned here so any implementation, in any language, can
reproduce a stream from the same seed:

    uniform():          (next_u64() >> 11) * 2^-53, in [0.0, 1.0)
    randint(a, b):      a + (next_u64() mod (b - a + 1)), inclusive ends
    exponential(rate):  -log1p(-uniform()) / rate
    chance(p):          uniform() < p

The first ten raw draws for seed 42 are frozen as golden data in
tests/golden/splitmix64_seed42.json.
"""

from __future__ import annotations

import math

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def randint(self, a: int, b: int) -> int:
        """Uniform integer in [a, b]. Modulo bias is < range/2^64, negligible here."""
        if b < a:
            raise ValueError(f"empty range [{a}, {b}]")
        return a + self.next_u64() % (b - a + 1)

    def exponential(self, rate: float) -> float:
        if rate <= 0:
            raise ValueError("rate must be positive")
        return -math.log1p(-self.uniform()) / rate

    def chance(self, p: float) -> bool:
        return self.uniform() < p
