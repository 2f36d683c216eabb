"""Deterministic 64-bit PRNG used for every seeded choice in the package.

The generator is xorshift64* with the state initialised through one round
of splitmix64, so small integer seeds still produce well-mixed streams.
The exact constants are part of the package contract: fixtures generated
from a seed must be reproducible on any platform.

    splitmix64:  z = (seed + 0x9E3779B97F4A7C15) mod 2^64
                 z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
                 z ^= z >> 27; z *= 0x94D049BB133111EB
                 z ^= z >> 31
    xorshift64*: s ^= s >> 12; s ^= s << 25; s ^= s >> 27
                 output = (s * 0x2545F4914F6CDD1D) mod 2^64

Floats are drawn as ``(output >> 11) * 2^-53`` (uniform in [0, 1)), and
Gaussian deviates come from the Box-Muller transform on two uniforms.
"""

from __future__ import annotations

import math

_MASK = (1 << 64) - 1


def _splitmix64(seed: int) -> int:
    z = (seed + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class Xorshift64Star:
    """Seeded xorshift64* stream with uniform/Gaussian/shuffle helpers."""

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be a non-negative integer")
        self._state = _splitmix64(seed & _MASK)
        if self._state == 0:  # xorshift state must never be zero
            self._state = 0x9E3779B97F4A7C15
        self._spare_gauss: float | None = None

    def next_u64(self) -> int:
        s = self._state
        s ^= (s >> 12)
        s ^= (s << 25) & _MASK
        s ^= (s >> 27)
        self._state = s
        return (s * 0x2545F4914F6CDD1D) & _MASK

    def next_float(self) -> float:
        """Uniform double in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.next_float()

    def randbelow(self, n: int) -> int:
        """Integer in [0, n); plain modulo, bias is irrelevant at our n."""
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n

    def gauss(self) -> float:
        """Standard normal via Box-Muller, consuming two uniforms per pair."""
        if self._spare_gauss is not None:
            z = self._spare_gauss
            self._spare_gauss = None
            return z
        # shift by one ULP so log() never sees zero
        u1 = ((self.next_u64() >> 11) + 1) * (2.0 ** -53)
        u2 = self.next_float()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare_gauss = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]
