"""Seeded PRNG for parameter initialization and seed derivation.

The generator is SplitMix64 (Vigna's finalizer constants), pinned here so that
weight initialization is bit-identical across platforms and does not depend on
any numpy RNG stream:

    state = (state + 0x9E3779B97F4A7C15) mod 2^64
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    output = z ^ (z >> 31)

Doubles in [0, 1) take the top 53 bits: (output >> 11) * 2^-53.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Deterministic 64-bit stream; one instance per ParamStore."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return _mix(self._state)

    def uniform(self) -> float:
        """Double in [0, 1)."""
        return (self.next_u64() >> 11) * 2.0**-53

    def fill_uniform(self, shape: tuple[int, ...], lo: float, hi: float) -> np.ndarray:
        """Row-major array of uniforms in [lo, hi)."""
        n = int(np.prod(shape)) if shape else 1
        vals = np.empty(n, dtype=np.float64)
        for i in range(n):
            vals[i] = lo + (hi - lo) * self.uniform()
        return vals.reshape(shape)


def derive_seed(base: int, label: str) -> int:
    """Stable sub-seed for a named purpose (stage, epoch, clip, ...)."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    tag = int.from_bytes(digest[:8], "little")
    return _mix((base & _MASK64) ^ tag)
