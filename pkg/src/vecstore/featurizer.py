"""Hashing-trick featurizer: fixed small vectors for arbitrary key sets.

Gives non-embedding inputs (POS tags, dependency labels, token shapes)
a deterministic dense unit vector sized to the number of distinct
values, for concatenation with word vectors in a query session.
"""
from __future__ import annotations

import numpy as np

from .core import normalize
from .errors import EmptyKey, InvalidN
from .prng import hash32, prvg

# Separates namespace from key in the hashed payload so that
# ("ab", "c") and ("a", "bc") never collide.
_SEP = b"\x1f"


def featurizer_dim(max_values: int) -> int:
    """Vector width for a set of up to `max_values` distinct keys.

    max(2, 2 * ceil(log10(max_values))), computed in integer arithmetic.
    """
    if isinstance(max_values, bool) or not isinstance(max_values, int) or max_values < 1:
        raise InvalidN(f"max_values must be a positive integer, got {max_values!r}")
    digits = 0 if max_values == 1 else len(str(max_values - 1))
    return max(2, 2 * digits)


class Featurizer:
    """Maps keys in a namespace to deterministic unit vectors."""

    def __init__(self, max_values: int, namespace: str = ""):
        self.max_values = max_values
        self.namespace = namespace
        self.dimension = featurizer_dim(max_values)

    def query(self, key: str) -> np.ndarray:
        """Unit float32 vector for `key`, stable across processes."""
        if not key or not key.strip():
            raise EmptyKey("featurizer keys must be non-empty")
        payload = self.namespace.encode("utf-8") + _SEP + key.encode("utf-8")
        return normalize(prvg(hash32(payload), self.dimension))

    def contains(self, key: str) -> bool:
        """Featurizers can synthesize any key, so membership is always true."""
        return True

    def __repr__(self) -> str:
        return (f"Featurizer(max_values={self.max_values}, "
                f"namespace={self.namespace!r}, dimension={self.dimension})")
