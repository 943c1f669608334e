"""Query session: shaped queries, caching, and store concatenation.

A session wraps one or more members (store readers and featurizers) and
answers key queries with their concatenated vectors. Single-key vectors
and whole query results go through small thread-safe LRU caches; both
caches are transparent, returning exactly what recomputation would.
"""
from __future__ import annotations

import os
import threading
from collections import OrderedDict
from typing import Sequence, Union

import numpy as np

from . import search
from .core import Tier, cosine
from .errors import EmptyQuery, TierUnsupported, TupleArityMismatch
from .featurizer import Featurizer
from .reader import StoreReader

CACHE_SIZE_ENV = "VECSTORE_CACHE_SIZE"
DEFAULT_KEY_CACHE = 1000
DEFAULT_RESULT_CACHE = 128

Member = Union[StoreReader, Featurizer]


class LruCache:
    """Small thread-safe LRU map; capacity 0 disables it."""

    def __init__(self, capacity: int):
        if capacity < 0:
            raise ValueError("cache capacity must be >= 0")
        self.capacity = capacity
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key):
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                self.hits += 1
                return self._data[key]
            self.misses += 1
            return None

    def put(self, key, value):
        if self.capacity == 0:
            return
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self.capacity:
                self._data.popitem(last=False)

    def __len__(self) -> int:
        with self._lock:
            return len(self._data)


def _default_key_cache_size() -> int:
    raw = os.environ.get(CACHE_SIZE_ENV)
    if raw is None:
        return DEFAULT_KEY_CACHE
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{CACHE_SIZE_ENV} must be an integer, got {raw!r}") from None
    if value < 0:
        raise ValueError(f"{CACHE_SIZE_ENV} must be >= 0, got {value}")
    return value


class QuerySession:
    """Facade over an ordered list of stores and featurizers."""

    def __init__(self, members: Sequence[Member] | Member,
                 key_cache_size: int | None = None,
                 result_cache_size: int = DEFAULT_RESULT_CACHE):
        if isinstance(members, (StoreReader, Featurizer)):
            members = [members]
        self.members: list[Member] = list(members)
        if not self.members:
            raise ValueError("a session needs at least one member")
        if key_cache_size is None:
            key_cache_size = _default_key_cache_size()
        self.key_cache = LruCache(key_cache_size)
        self.result_cache = LruCache(result_cache_size)

    @property
    def total_dimension(self) -> int:
        return sum(m.dimension for m in self.members)

    def contains(self, key: str) -> bool:
        """True iff every member holds the exact key."""
        return all(m.contains(key) for m in self.members)

    def __contains__(self, key: str) -> bool:
        return self.contains(key)

    # --- vector queries ---

    def _key_vector(self, key: str) -> np.ndarray:
        cached = self.key_cache.get(key)
        if cached is None:
            parts = [m.query(key) for m in self.members]
            cached = parts[0] if len(parts) == 1 else np.concatenate(parts)
            self.key_cache.put(key, cached)
        return cached

    def _tuple_vector(self, spec: tuple) -> np.ndarray:
        if len(spec) != len(self.members):
            raise TupleArityMismatch(
                f"tuple has {len(spec)} elements for {len(self.members)} members"
            )
        parts = [m.query(k) for m, k in zip(self.members, spec)]
        return parts[0] if len(parts) == 1 else np.concatenate(parts)

    def _row(self, item) -> np.ndarray:
        if isinstance(item, str):
            return self._key_vector(item)
        if isinstance(item, tuple):
            return self._tuple_vector(item)
        raise TypeError(f"query items must be keys or per-member tuples, got {type(item)}")

    def query(self, spec) -> np.ndarray:
        """Vectors for a key, key list, nested key lists, or tuple.

        A single key gives a (d,) vector; a flat list a (n, d) matrix in
        input order; a list of lists a (n, longest, d) block with short
        rows padded by zero vectors; a tuple routes element i to member
        i before concatenation.
        """
        if isinstance(spec, str):
            if not spec:
                raise EmptyQuery("empty key")
            return self._key_vector(spec).copy()
        if isinstance(spec, tuple):
            if not spec:
                raise EmptyQuery("empty tuple query")
            return self._tuple_vector(spec).copy()
        if isinstance(spec, list):
            if not spec:
                raise EmptyQuery("empty query list")
            if all(isinstance(item, list) for item in spec):
                if any(not item for item in spec):
                    raise EmptyQuery("inner query lists must be non-empty")
                width = max(len(item) for item in spec)
                block = np.zeros((len(spec), width, self.total_dimension), dtype=np.float32)
                for i, inner in enumerate(spec):
                    for j, item in enumerate(inner):
                        block[i, j] = self._row(item)
                return block
            return np.stack([self._row(item) for item in spec])
        raise TypeError(f"unsupported query spec of type {type(spec)}")

    def similarity(self, a, b) -> float:
        """Cosine similarity of two queries (keys or tuples)."""
        return cosine(self.query(a), self.query(b))

    # --- similarity search ---

    def _single_store(self) -> StoreReader:
        if len(self.members) != 1 or not isinstance(self.members[0], StoreReader):
            raise TierUnsupported(
                "similarity search needs a session over exactly one store"
            )
        return self.members[0]

    def most_similar(self, target, topn: int = 10, method: str = "exact",
                     effort: float = 1.0) -> list[search.SearchHit]:
        """Nearest keys to a target key or vector.

        Key targets are resolved through query (so OOV targets work) and
        excluded from their own results; vector targets exclude nothing.
        Results are memoized, so a repeated call is served from cache.
        """
        if method not in ("exact", "approximate"):
            raise ValueError(f"unknown method {method!r}")
        reader = self._single_store()
        if isinstance(target, str):
            exclude = {target}
            cache_target = ("key", target)
            vector = self._key_vector(target)
        else:
            exclude = set()
            arr = np.asarray(target, dtype=np.float32)
            cache_target = ("vec", arr.tobytes())
            vector = arr
        cache_key = ("most_similar", method, cache_target, topn,
                     effort if method == "approximate" else None)
        cached = self.result_cache.get(cache_key)
        if cached is not None:
            return list(cached)
        if method == "exact":
            hits = search.exact_topk(reader, vector, topn, exclude)
        else:
            if reader.metadata.tier < Tier.HEAVY:
                raise TierUnsupported("approximate search needs a HEAVY store")
            forest = reader.load_ann()
            raw = search.approx_topk(forest, reader, vector, topn + len(exclude), effort)
            hits = [h for h in raw if h.key not in exclude][:topn]
        self.result_cache.put(cache_key, tuple(hits))
        return hits

    def closer_than(self, a: str, b: str) -> list[str]:
        """Keys strictly closer to `a` than `b` is (single-store sessions)."""
        reader = self._single_store()
        cache_key = ("closer_than", a, b)
        cached = self.result_cache.get(cache_key)
        if cached is not None:
            return list(cached)
        result = search.closer_than(reader, a, b)
        self.result_cache.put(cache_key, tuple(result))
        return result

    def analogy(self, positive: list[str], negative: list[str] = (),
                method: str = "add", topn: int = 10) -> list[search.SearchHit]:
        """Analogy search over the single member store."""
        reader = self._single_store()
        cache_key = ("analogy", tuple(positive), tuple(negative), method, topn)
        cached = self.result_cache.get(cache_key)
        if cached is not None:
            return list(cached)
        hits = search.analogy(reader, list(positive), list(negative), method, topn)
        self.result_cache.put(cache_key, tuple(hits))
        return hits
