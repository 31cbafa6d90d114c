"""Seeded, portable random number generation.

Every stochastic feature of the package (random network balls, parameter
sampling, factorization spot checks) draws from SplitMix64, so identical
seeds reproduce identical results on any platform and in any faithful
implementation of the algorithm.

Stream layout: output k of a stream seeded with ``s`` is
``mix64(s + (k + 1) * GAMMA)`` where ``GAMMA = 0x9E3779B97F4A7C15`` and
``mix64`` is the standard SplitMix64 finalizer.  Doubles are produced from
the top 53 bits of an output word.
"""

from __future__ import annotations

MASK64 = 0xFFFFFFFFFFFFFFFF
GAMMA = 0x9E3779B97F4A7C15

_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_INV_2_53 = 2.0 ** -53


def mix64(value: int) -> int:
    """SplitMix64 finalizer: avalanche a 64-bit word."""
    z = value & MASK64
    z = ((z ^ (z >> 30)) * _MUL1) & MASK64
    z = ((z ^ (z >> 27)) * _MUL2) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    """Seed for sub-stream ``index``: output ``index`` of the stream seeded with ``seed``."""
    if index < 0:
        raise ValueError(f"stream index must be non-negative, got {index}")
    return mix64((seed + (index + 1) * GAMMA) & MASK64)


class SplitMix64:
    """Sequential SplitMix64 stream."""

    __slots__ = ("_state",)

    def __init__(self, seed: int) -> None:
        self._state = seed & MASK64

    def next_uint64(self) -> int:
        self._state = (self._state + GAMMA) & MASK64
        return mix64(self._state)

    def next_float(self) -> float:
        """Uniform double in [0, 1) with 53-bit resolution."""
        return (self.next_uint64() >> 11) * _INV_2_53

    def uniform(self, lo: float, hi: float) -> float:
        """Uniform double in the open interval (lo, hi)."""
        u = self.next_float()
        while u == 0.0:
            u = self.next_float()
        return lo + (hi - lo) * u
