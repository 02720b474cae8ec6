"""splitmix64 stream used to synthesize Q, K, V reproducibly.

Output ``i`` (1-based) of a stream seeded with ``s`` is ``mix(s + i * GAMMA)``
modulo 2**64. A draw maps to [-1, 1) as ``2 * (x >> 11) / 2**53 - 1``.
Q, K and V are filled row-major from one stream, in that order.
"""

from __future__ import annotations

import numpy as np

__all__ = ["GAMMA", "splitmix64", "splitmix64_array", "uniform_pm1", "synth_qkv"]

GAMMA = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


def splitmix64(state: int):
    """One step: returns ``(new_state, output)`` (pure Python reference)."""
    state = (state + GAMMA) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def splitmix64_array(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Outputs ``start+1 .. start+count`` of the stream, as uint64."""
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = np.uint64(seed & _MASK) + idx * np.uint64(GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def uniform_pm1(seed: int, count: int, start: int = 0) -> np.ndarray:
    """``count`` float64 draws in [-1, 1) from 53-bit mantissas."""
    bits = splitmix64_array(seed, count, start) >> np.uint64(11)
    return bits.astype(np.float64) * 2.0**-53 * 2.0 - 1.0


def synth_qkv(n: int, d: int, seed: int):
    """Q, K, V of shape (n, d) as float16 (round-to-nearest-even from float64)."""
    vals = uniform_pm1(seed, 3 * n * d).reshape(3, n, d)
    return tuple(vals[i].astype(np.float16) for i in range(3))
