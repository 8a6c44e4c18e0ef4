"""Deterministic random numbers via splitmix64.

Every stochastic choice in the package (test-network weights, noise
initialization) flows through this generator so that runs are reproducible
bit-for-bit across platforms and across language reimplementations.  The
algorithm is Vigna's splitmix64: the 64-bit state advances by the constant
0x9E3779B97F4A7C15 before each output and the advanced state is scrambled
by two xor-shift-multiply rounds.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """splitmix64 stream seeded with an arbitrary 64-bit integer."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK
        return (z ^ (z >> 31)) & _MASK

    def next_float(self) -> float:
        # u64 * 2^-64 lies in [0, 1); exact in double for the top 53 bits.
        return self.next_u64() * 2.0**-64

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.next_float()

    def fill_uniform(self, shape, low: float, high: float) -> np.ndarray:
        """Row-major (C-order) array of uniforms; one draw per element."""
        n = int(np.prod(shape))
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            out[i] = self.uniform(low, high)
        return out.reshape(shape)
