"""Pinned deterministic hashing and pseudorandom vector generation.

Both primitives are fixed bit-for-bit so that synthesized vectors are
reproducible across processes, platforms, and ports to other languages:

* ``hash32`` is xxHash32 with seed 0.
* ``prvg`` draws from the splitmix64 stream whose state starts at the
  32-bit seed zero-extended to 64 bits. Output k is the mix of state
  ``seed + k * GAMMA`` (the stream has no sequential dependency, so it is
  computed vectorized). Each 64-bit output is reduced to a float64 via
  ``(z >> 11) / 2**53`` and affinely mapped onto [-1, 1); every step of
  that mapping is exact in IEEE-754 double precision.
"""
from __future__ import annotations

import numpy as np
import xxhash

HASH_ALGORITHM_XXH32 = 1
PRNG_SPLITMIX64 = 1

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64


def hash32(data: bytes | str) -> int:
    """32-bit unsigned xxHash32 (seed 0) of `data`; strings are hashed as UTF-8."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    return xxhash.xxh32_intdigest(data)


def prvg(seed: int, d: int) -> np.ndarray:
    """Deterministic pseudorandom vector of `d` float64 values in [-1, 1).

    Fully determined by (seed, d); same bits on every platform.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    idx = np.arange(1, d + 1, dtype=np.uint64)
    state = _U64(seed & 0xFFFFFFFF) + _GAMMA * idx  # wraps mod 2**64
    z = state
    z = (z ^ (z >> _U64(30))) * _MIX1
    z = (z ^ (z >> _U64(27))) * _MIX2
    z = z ^ (z >> _U64(31))
    u = (z >> _U64(11)).astype(np.float64) * 2.0**-53
    return 2.0 * u - 1.0
