"""Seeded synthetic corpora for benchmarks, fixtures, and tests.

Two flavors: `fixture_records` is built entirely from the pinned hash
and PRVG primitives, so its bytes are reproducible on any platform and
safe to freeze into committed checksums; `gaussian_records` uses numpy's
seeded generator for bulk benchmark data where statistical shape
matters more than bit stability. Benchmark vectors get a power-law
variance spectrum so their covariance looks like a trained embedding
matrix rather than an isotropic cloud; isotropic high-dimensional
points are a degenerate worst case for any angular nearest-neighbor
structure and do not resemble the data these stores hold in practice.
"""
from __future__ import annotations

from typing import Iterator

import numpy as np

from .core import Tier, StoreMetadata
from .prng import hash32, prvg
from .writer import write_store
from . import search

_CONSONANTS = "bcdfghjklmnprstvw"
_VOWELS = "aeiou"
_CODAS = ["", "", "n", "r", "s", "l"]

_SYLLABLES = [c + v + coda for c in _CONSONANTS for v in _VOWELS for coda in sorted(set(_CODAS))]


def fixture_records(n: int, d: int, salt: str = "fixture") -> list[tuple[str, np.ndarray]]:
    """Fully pinned records: same keys and bits on every platform."""
    base = len(_SYLLABLES)
    records = []
    for i in range(n):
        digits = [i % base]
        rest = i // base
        while rest:
            digits.append(rest % base)
            rest //= base
        key = "".join(_SYLLABLES[digit] for digit in reversed(digits))
        if len(digits) == 1:
            key = _SYLLABLES[0] + key
        records.append((key, prvg(hash32(f"{salt}:{key}"), d)))
    return records


def english_like_words(count: int, seed: int = 0) -> list[str]:
    """Pronounceable unique pseudo-words, 2 to 4 syllables."""
    rng = np.random.default_rng(seed)
    words: dict[str, None] = {}
    while len(words) < count:
        syllables = rng.integers(2, 5)
        parts = []
        for _ in range(syllables):
            c = _CONSONANTS[rng.integers(0, len(_CONSONANTS))]
            v = _VOWELS[rng.integers(0, len(_VOWELS))]
            coda = _CODAS[rng.integers(0, len(_CODAS))]
            parts.append(c + v + coda)
        words.setdefault("".join(parts))
    return list(words)[:count]


# Component j of a benchmark vector has variance (1 + j) ** -SPECTRUM_DECAY,
# a decay in the range reported for trained word-embedding covariances.
SPECTRUM_DECAY = 1.75


def gaussian_records(n: int, d: int, seed: int = 0,
                     keys: list[str] | None = None) -> Iterator[tuple[str, np.ndarray]]:
    """Seeded Gaussian records with generated or supplied keys.

    Rows are drawn componentwise from centered normals whose variances
    follow the fixed power-law spectrum above.
    """
    if keys is not None and len(keys) != n:
        raise ValueError(f"got {len(keys)} keys for {n} records")
    rng = np.random.default_rng(seed)
    sigma = (1.0 + np.arange(d)) ** (-SPECTRUM_DECAY / 2.0)
    block_size = max(1, min(n, (1 << 22) // max(d, 1)))
    produced = 0
    while produced < n:
        block = rng.standard_normal((min(block_size, n - produced), d))
        block *= sigma
        for row in block:
            key = keys[produced] if keys is not None else f"w{produced:07d}"
            yield key, row
            produced += 1


def build_synthetic_store(path: str, n: int, d: int, *,
                          tier: Tier = Tier.MEDIUM, precision: int = 7,
                          seed: int = 0, english_keys: bool = False,
                          n_trees: int = search.DEFAULT_TREES,
                          leaf_cap: int = search.DEFAULT_LEAF_CAP,
                          build_seed: int = search.DEFAULT_BUILD_SEED) -> StoreMetadata:
    """Write a store of seeded Gaussian vectors to `path`."""
    keys = english_like_words(n, seed) if english_keys else None
    return write_store(
        gaussian_records(n, d, seed, keys), path,
        tier=tier, precision=precision,
        n_trees=n_trees, leaf_cap=leaf_cap, build_seed=build_seed,
    )
