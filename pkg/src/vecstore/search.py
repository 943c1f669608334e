"""Exact cosine search, derived queries, and the random-projection forest.

Exact search scans the memory-mapped integer block in chunks, scoring
true cosine in double precision against the float32 vectors a caller
would see from read_vector, so results match a naive re-scan bit for
bit. The approximate path traverses a forest of random-projection trees
best-first with a shared priority queue, then re-scores the collected
candidates exactly; reported similarities are always exact.
"""
from __future__ import annotations

import heapq
import struct
from typing import TYPE_CHECKING, Iterable, NamedTuple

import numpy as np

from .core import QuantizationSpec, dequantize, quantize
from .errors import (
    DimensionMismatch,
    EffortOutOfRange,
    EmptyPositive,
    KeyNotFound,
    TooFewVectors,
    ZeroVector,
)
from .format import decode_varint_array, encode_varint_array

if TYPE_CHECKING:
    from .reader import StoreReader

_SCAN_CHUNK = 8192
DEFAULT_TREES = 16
DEFAULT_LEAF_CAP = 64
DEFAULT_BUILD_SEED = 42
DEFAULT_BUDGET_SCALE = 32  # beta in the inspection-budget formula

_FOREST_HEADER = struct.Struct("<IQIBxxx")
_TREE_HEADER = struct.Struct("<IIi")
_NODE_FIXED = struct.Struct("<iif")


class SearchHit(NamedTuple):
    key: str
    similarity: float


def _query_f64(q, dimension: int) -> tuple[np.ndarray, float]:
    arr = np.asarray(q, dtype=np.float64)
    if arr.ndim != 1 or arr.size != dimension:
        raise DimensionMismatch(
            f"query has shape {arr.shape}, store dimension is {dimension}"
        )
    norm = float(np.sqrt(arr @ arr))
    if norm < 1e-12:
        raise ZeroVector("cannot search with a zero query vector")
    return arr, norm


def _all_scores(reader: "StoreReader", q64: np.ndarray, qnorm: float) -> np.ndarray:
    """True cosine of the query against every stored row, float64."""
    ints = reader.vector_ints
    scale = reader.metadata.quantization.scale
    norms = reader.row_norms()
    n = ints.shape[0]
    out = np.empty(n, dtype=np.float64)
    for start in range(0, n, _SCAN_CHUNK):
        stop = min(start + _SCAN_CHUNK, n)
        rows = (ints[start:stop] / scale).astype(np.float32).astype(np.float64)
        out[start:stop] = rows @ q64
    np.divide(out, norms * qnorm, out=out)
    # Rounding can push a self-comparison a hair past 1.0; similarities
    # are contractually within [-1, 1].
    np.clip(out, -1.0, 1.0, out=out)
    return out


def _top_hits(reader: "StoreReader", scores: np.ndarray, ordinals: np.ndarray,
              k: int, exclude: Iterable[str] = ()) -> list[SearchHit]:
    """Best k (score desc, ordinal asc) as SearchHit values."""
    order = np.lexsort((ordinals, -scores))
    excluded = set(exclude)
    hits: list[SearchHit] = []
    for idx in order:
        key = reader.key_at(int(ordinals[idx]))
        if key in excluded:
            continue
        hits.append(SearchHit(key, float(scores[idx])))
        if len(hits) == k:
            break
    return hits


def exact_topk(reader: "StoreReader", q, k: int,
               exclude: Iterable[str] = ()) -> list[SearchHit]:
    """The k highest-cosine keys by full scan of the vector block."""
    if k < 1:
        raise ValueError("k must be >= 1")
    q64, qnorm = _query_f64(q, reader.metadata.dimension)
    scores = _all_scores(reader, q64, qnorm)
    ordinals = np.arange(scores.size, dtype=np.int64)
    return _top_hits(reader, scores, ordinals, k, exclude)


def closer_than(reader: "StoreReader", a: str, b: str) -> list[str]:
    """All keys strictly closer to `a` than `b` is, best first."""
    ord_a = reader.lookup_key(a)
    if ord_a is None:
        raise KeyNotFound(a)
    ord_b = reader.lookup_key(b)
    if ord_b is None:
        raise KeyNotFound(b)
    va = reader.read_vector(ord_a)
    q64, qnorm = _query_f64(va, reader.metadata.dimension)
    scores = _all_scores(reader, q64, qnorm)
    threshold = scores[ord_b]
    keep = np.flatnonzero(scores > threshold)
    keep = keep[keep != ord_a]
    order = np.lexsort((keep, -scores[keep]))
    return [reader.key_at(int(keep[i])) for i in order]


def analogy(reader: "StoreReader", positive: list[str], negative: list[str],
            method: str = "add", topn: int = 10) -> list[SearchHit]:
    """Analogy query over cosine similarities to the input keys.

    "add" scores sum(cos(w, p)) - sum(cos(w, n)); "mul" scores
    prod((cos(w, p) + 1) / 2) / (prod((cos(w, n) + 1) / 2) + 1e-6).
    Input keys never appear in the results.
    """
    if not positive:
        raise EmptyPositive("analogy needs at least one positive key")
    if method not in ("add", "mul"):
        raise ValueError(f"unknown analogy method {method!r}")
    per_key: dict[str, np.ndarray] = {}
    for key in list(positive) + list(negative):
        if key not in per_key:
            ordinal = reader.lookup_key(key)
            if ordinal is None:
                raise KeyNotFound(key)
            q64, qnorm = _query_f64(reader.read_vector(ordinal), reader.metadata.dimension)
            per_key[key] = _all_scores(reader, q64, qnorm)
    if method == "add":
        scores = np.zeros(len(reader), dtype=np.float64)
        for key in positive:
            scores += per_key[key]
        for key in negative:
            scores -= per_key[key]
    else:
        scores = np.ones(len(reader), dtype=np.float64)
        for key in positive:
            scores *= (per_key[key] + 1.0) / 2.0
        denom = np.ones(len(reader), dtype=np.float64)
        for key in negative:
            denom *= (per_key[key] + 1.0) / 2.0
        scores /= denom + 1e-6
    ordinals = np.arange(scores.size, dtype=np.int64)
    return _top_hits(reader, scores, ordinals, topn, exclude=set(positive) | set(negative))


class _Tree(NamedTuple):
    children: np.ndarray    # (n_internal, 2) int32 node ids; negative = ~leaf index
    offsets: np.ndarray     # (n_internal,) float32
    normals: np.ndarray     # (n_internal, d) float32
    leaf_starts: np.ndarray  # (n_leaves + 1,) int64 into leaf_vals
    leaf_vals: np.ndarray   # concatenated ordinals, int64
    root: int


class ProjectionForest:
    """Immutable forest of random-projection trees over stored vectors."""

    def __init__(self, trees: list[_Tree], n_vectors: int, dimension: int,
                 leaf_cap: int, build_seed: int):
        self.trees = trees
        self.n_vectors = n_vectors
        self.dimension = dimension
        self.leaf_cap = leaf_cap
        self.build_seed = build_seed

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def leaf_sizes(self) -> list[int]:
        sizes = []
        for tree in self.trees:
            sizes.extend(np.diff(tree.leaf_starts).tolist())
        return sizes


def _split_indices(x: np.ndarray, idx: np.ndarray, rng: np.random.Generator):
    """One hyperplane split; returns (normal f32, offset f32, left, right)."""
    pick = rng.choice(idx.size, size=2, replace=False)
    a = x[idx[pick[0]]].astype(np.float64)
    b = x[idx[pick[1]]].astype(np.float64)
    diff = a - b
    norm = float(np.sqrt(diff @ diff))
    if norm < 1e-12:
        normal = None
    else:
        normal = (diff / norm).astype(np.float32)
        offset = np.float32((diff / norm) @ ((a + b) / 2.0))
        margins = x[idx] @ normal - offset
        left = idx[margins < 0]
        right = idx[margins >= 0]
        if left.size and right.size:
            return normal, offset, left, right
    # Degenerate split: identical sample points or a one-sided
    # hyperplane. Fall back to a random balanced partition.
    if normal is None:
        raw = rng.standard_normal(x.shape[1])
        normal = (raw / np.sqrt(raw @ raw)).astype(np.float32)
        offset = np.float32(0.0)
    else:
        offset = np.float32(np.median(x[idx] @ normal))
    perm = rng.permutation(idx.size)
    half = idx.size // 2
    return normal, offset, idx[perm[:half]], idx[perm[half:]]


def _build_tree(x: np.ndarray, leaf_cap: int, rng: np.random.Generator) -> _Tree:
    children: list[list[int]] = []
    offsets: list[float] = []
    normals: list[np.ndarray] = []
    leaves: list[np.ndarray] = []
    root = 0
    all_idx = np.arange(x.shape[0], dtype=np.int64)
    # Explicit stack; left subtree is always processed first so RNG
    # consumption order is a pure function of the data and seed.
    stack: list[tuple[np.ndarray, int, int]] = [(all_idx, -1, 0)]
    while stack:
        idx, parent, side = stack.pop()
        if idx.size <= leaf_cap:
            node_id = ~len(leaves)
            leaves.append(np.sort(idx))
        else:
            normal, offset, left, right = _split_indices(x, idx, rng)
            node_id = len(children)
            children.append([0, 0])
            offsets.append(float(offset))
            normals.append(normal)
            stack.append((right, node_id, 1))
            stack.append((left, node_id, 0))
        if parent < 0:
            root = node_id
        else:
            children[parent][side] = node_id
    leaf_starts = np.zeros(len(leaves) + 1, dtype=np.int64)
    np.cumsum([leaf.size for leaf in leaves], out=leaf_starts[1:])
    return _Tree(
        children=np.array(children, dtype=np.int32).reshape(len(children), 2),
        offsets=np.array(offsets, dtype=np.float32),
        normals=(np.vstack(normals) if normals
                 else np.empty((0, x.shape[1]), dtype=np.float32)),
        leaf_starts=leaf_starts,
        leaf_vals=(np.concatenate(leaves) if leaves
                   else np.empty(0, dtype=np.int64)),
        root=root,
    )


def build_forest(vectors: np.ndarray, n_trees: int = DEFAULT_TREES,
                 leaf_cap: int = DEFAULT_LEAF_CAP,
                 seed: int = DEFAULT_BUILD_SEED) -> ProjectionForest:
    """Build a deterministic forest over `vectors` (one row per ordinal)."""
    x = np.ascontiguousarray(vectors, dtype=np.float32)
    if x.ndim != 2 or x.shape[0] < 2:
        raise TooFewVectors("forest construction needs at least two vectors")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if leaf_cap < 1:
        raise ValueError("leaf_cap must be >= 1")
    streams = np.random.SeedSequence(seed).spawn(n_trees)
    trees = [_build_tree(x, leaf_cap, np.random.default_rng(s)) for s in streams]
    return ProjectionForest(trees, x.shape[0], x.shape[1], leaf_cap, seed)


def serialize_forest(forest: ProjectionForest, qspec: QuantizationSpec) -> bytes:
    """Pack the forest as little-endian node records.

    Internal node: i32 left id, i32 right id, f32 offset, then the
    normal quantized at the store precision. Leaf payloads are varint
    ordinal runs, each preceded by a varint count. Node ids point into
    the internal-node table; negative ids are bitwise-complemented leaf
    indices.
    """
    parts = [_FOREST_HEADER.pack(forest.n_trees, forest.n_vectors,
                                 forest.dimension, qspec.precision)]
    tree_blobs = []
    for tree in forest.trees:
        buf = bytearray()
        n_internal = tree.children.shape[0]
        n_leaves = tree.leaf_starts.size - 1
        buf += _TREE_HEADER.pack(n_internal, n_leaves, tree.root)
        for i in range(n_internal):
            buf += _NODE_FIXED.pack(int(tree.children[i, 0]),
                                    int(tree.children[i, 1]),
                                    float(tree.offsets[i]))
            buf += quantize(tree.normals[i], qspec).tobytes()
        for li in range(n_leaves):
            vals = tree.leaf_vals[tree.leaf_starts[li]:tree.leaf_starts[li + 1]]
            buf += encode_varint_array(np.concatenate(([vals.size], vals)))
        tree_blobs.append(bytes(buf))
    parts.append(np.array([len(b) for b in tree_blobs], dtype="<u8").tobytes())
    parts.extend(tree_blobs)
    return b"".join(parts)


def deserialize_forest(raw: bytes, leaf_cap: int, build_seed: int) -> ProjectionForest:
    """Inverse of serialize_forest."""
    n_trees, n_vectors, dimension, precision = _FOREST_HEADER.unpack_from(raw, 0)
    qspec = QuantizationSpec(precision)
    width = qspec.byte_width * dimension
    pos = _FOREST_HEADER.size
    lengths = np.frombuffer(raw, dtype="<u8", count=n_trees, offset=pos)
    pos += 8 * n_trees
    trees = []
    for length in lengths.tolist():
        blob = memoryview(raw)[pos:pos + int(length)]
        pos += int(length)
        n_internal, n_leaves, root = _TREE_HEADER.unpack_from(blob, 0)
        at = _TREE_HEADER.size
        children = np.empty((n_internal, 2), dtype=np.int32)
        offsets = np.empty(n_internal, dtype=np.float32)
        normals = np.empty((n_internal, dimension), dtype=np.float32)
        for i in range(n_internal):
            left, right, off = _NODE_FIXED.unpack_from(blob, at)
            at += _NODE_FIXED.size
            children[i, 0] = left
            children[i, 1] = right
            offsets[i] = off
            ints = np.frombuffer(blob, dtype=qspec.int_dtype,
                                 count=dimension, offset=at)
            normals[i] = dequantize(ints, qspec)
            at += width
        flat = decode_varint_array(blob[at:]).astype(np.int64)
        leaf_starts = np.zeros(n_leaves + 1, dtype=np.int64)
        leaf_vals = np.empty(flat.size - n_leaves, dtype=np.int64)
        cursor = 0
        filled = 0
        for li in range(n_leaves):
            count = int(flat[cursor])
            cursor += 1
            leaf_vals[filled:filled + count] = flat[cursor:cursor + count]
            cursor += count
            filled += count
            leaf_starts[li + 1] = filled
        if cursor != flat.size:
            raise ValueError("leaf payload length mismatch")
        trees.append(_Tree(children, offsets, normals, leaf_starts,
                           leaf_vals[:filled], root))
    return ProjectionForest(trees, n_vectors, dimension, leaf_cap, build_seed)


def approx_topk(forest: ProjectionForest, reader: "StoreReader", q, k: int,
                effort: float = 1.0, beta: int = DEFAULT_BUDGET_SCALE) -> list[SearchHit]:
    """Approximate top-k: best-first forest traversal + exact re-scoring.

    The inspection budget is max(k, ceil(effort * beta * n_trees * k))
    candidate ordinals, counted as collected (a candidate reached
    through several trees consumes budget each time).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not (0.0 <= effort <= 1.0):
        raise EffortOutOfRange(f"effort {effort!r} outside [0.0, 1.0]")
    q64, qnorm = _query_f64(q, reader.metadata.dimension)
    q32 = q64.astype(np.float32)
    budget = max(k, int(np.ceil(effort * beta * forest.n_trees * k)))

    heap: list[tuple[float, int, int, int]] = []
    counter = 0
    for tree_id in range(forest.n_trees):
        heap.append((-np.inf, counter, tree_id, forest.trees[tree_id].root))
        counter += 1
    heapq.heapify(heap)
    collected: list[np.ndarray] = []
    seen = 0
    while heap and seen < budget:
        neg_bound, _, tree_id, node = heapq.heappop(heap)
        bound = -neg_bound
        tree = forest.trees[tree_id]
        if node < 0:
            leaf = ~node
            vals = tree.leaf_vals[tree.leaf_starts[leaf]:tree.leaf_starts[leaf + 1]]
            collected.append(vals)
            seen += vals.size
            continue
        margin = float(tree.normals[node] @ q32 - tree.offsets[node])
        left, right = int(tree.children[node, 0]), int(tree.children[node, 1])
        heapq.heappush(heap, (-min(bound, -margin), counter, tree_id, left))
        counter += 1
        heapq.heappush(heap, (-min(bound, margin), counter, tree_id, right))
        counter += 1
    if not collected:
        return []
    cands = np.unique(np.concatenate(collected))
    ints = reader.vector_ints
    scale = reader.metadata.quantization.scale
    rows = (ints[cands] / scale).astype(np.float32).astype(np.float64)
    scores = rows @ q64
    np.divide(scores, reader.row_norms()[cands] * qnorm, out=scores)
    np.clip(scores, -1.0, 1.0, out=scores)
    return _top_hits(reader, scores, cands, k)
