"""Platform-stable seeded randomness based on splitmix64.

Every stochastic component of the simulator draws from these helpers so
that a (seed, purpose) pair maps to the same bits on any machine. The
generator is counter-based, which also makes bulk generation a pure
vectorized computation.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """Finalizer of splitmix64 on a 64-bit integer."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive(seed: int, *tags: int) -> int:
    """Derive an independent child seed from a root seed and integer tags."""
    s = seed & _MASK
    for t in tags:
        s = mix64((s + _GAMMA) ^ (t & _MASK))
    return s


def uniforms(seed: int, n: int) -> np.ndarray:
    """n doubles in [0, 1), computed as mix64(seed + i*gamma) >> 11 / 2^53."""
    idx = np.arange(1, n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & _MASK) + idx * np.uint64(_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * (2.0**-53)


class SplitMix:
    """Sequential splitmix64 stream for loops that need one draw at a time."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        return mix64(self._state)

    def next_uniform(self) -> float:
        return (self.next_u64() >> 11) * (2.0**-53)
