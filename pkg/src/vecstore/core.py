"""Vector arithmetic, unit normalization, fixed-point quantization, and store metadata."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import DimensionMismatch, ZeroVector

ZERO_NORM_EPS = 1e-12

# signed integer range per byte width, used by the minimal-width rule
_SIGNED_MAX = {1: 2**7 - 1, 2: 2**15 - 1, 4: 2**31 - 1, 8: 2**63 - 1}
_INT_DTYPES = {1: np.dtype("<i1"), 2: np.dtype("<i2"), 4: np.dtype("<i4"), 8: np.dtype("<i8")}


class Tier(IntEnum):
    """Store flavor: which optional sections the file carries."""

    LIGHT = 0    # keys + vectors only
    MEDIUM = 1   # + character n-gram postings
    HEAVY = 2    # + approximate-search forest

    @classmethod
    def parse(cls, name: str) -> "Tier":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown tier {name!r}") from None


def byte_width_for_precision(precision: int) -> int:
    """Smallest width in {1, 2, 4, 8} whose signed range contains +/-10**precision."""
    if precision < 0:
        raise ValueError("precision must be >= 0")
    bound = 10**precision
    for width in (1, 2, 4, 8):
        if bound <= _SIGNED_MAX[width]:
            return width
    raise ValueError(f"precision {precision} exceeds 8-byte signed integer range")


@dataclass(frozen=True)
class QuantizationSpec:
    """Fixed-point encoding keeping `precision` decimal digits."""

    precision: int = 7

    def __post_init__(self):
        byte_width_for_precision(self.precision)  # validates range

    @property
    def scale(self) -> int:
        return 10**self.precision

    @property
    def byte_width(self) -> int:
        return byte_width_for_precision(self.precision)

    @property
    def int_dtype(self) -> np.dtype:
        return _INT_DTYPES[self.byte_width]


def normalize(v) -> np.ndarray:
    """Scale `v` to unit Euclidean length, returned as float32.

    The squared-component sum is accumulated with math.fsum, which is
    correctly rounded, so the result is bit-identical across platforms.
    """
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionMismatch("expected a non-empty 1-d vector")
    if not np.isfinite(arr).all():
        raise ValueError("vector has non-finite components")
    norm = math.sqrt(math.fsum((arr * arr).tolist()))
    if norm < ZERO_NORM_EPS:
        raise ZeroVector(f"vector norm {norm:.3g} is below {ZERO_NORM_EPS:g}")
    return (arr / norm).astype(np.float32)


def cosine(u, v) -> float:
    """Cosine similarity of two vectors, clamped to [-1, 1]."""
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionMismatch(f"cannot compare shapes {a.shape} and {b.shape}")
    na = math.sqrt(math.fsum((a * a).tolist()))
    nb = math.sqrt(math.fsum((b * b).tolist()))
    if na < ZERO_NORM_EPS or nb < ZERO_NORM_EPS:
        raise ZeroVector("cosine of a zero vector is undefined")
    return float(min(1.0, max(-1.0, math.fsum((a * b).tolist()) / (na * nb))))


def quantize(v, spec: QuantizationSpec) -> np.ndarray:
    """Map components to integers by round-half-away-from-zero of c * 10**p.

    Input is expected normalized (components in [-1, 1]); anything whose
    scaled magnitude exceeds the spec's byte width raises OverflowError.
    """
    arr = np.asarray(v, dtype=np.float64)
    scaled = arr * spec.scale
    ints = np.copysign(np.floor(np.abs(scaled) + 0.5), scaled)
    if np.abs(ints).max(initial=0.0) > _SIGNED_MAX[spec.byte_width]:
        raise OverflowError(
            f"scaled value exceeds {spec.byte_width}-byte signed range at precision {spec.precision}"
        )
    return ints.astype(spec.int_dtype)


def dequantize(ints, spec: QuantizationSpec) -> np.ndarray:
    """Inverse of quantize: integer / 10**p as float32."""
    arr = np.asarray(ints, dtype=np.float64)
    return (arr / spec.scale).astype(np.float32)


@dataclass
class StoreMetadata:
    """Parameters describing one store file."""

    dimension: int
    key_count: int
    tier: Tier
    quantization: QuantizationSpec
    ngram_min: int = 3
    ngram_max: int = 6
    hash_algorithm_id: int = 1   # 1 = xxHash32, seed 0
    prng_id: int = 1             # 1 = splitmix64 stream
    format_version: int = 1
    stopword_limit: int = 0      # n-gram posting cap applied at write time; 0 = none
    dropped_zero_vectors: int = 0
    duplicate_keys: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.key_count < 0:
            raise ValueError("key_count must be >= 0")
        if not (1 <= self.ngram_min <= self.ngram_max):
            raise ValueError("require 1 <= ngram_min <= ngram_max")
