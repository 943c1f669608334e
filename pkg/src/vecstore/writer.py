"""Store file writer: normalize, quantize, index, and lay out sections.

The writer consumes a record stream, holds the quantized table in
memory (the reader side is built for files larger than RAM, the writer
is not), and emits the finished container in one pass through a
temporary file renamed into place. Every choice that affects bytes is
seeded or pinned, so rewriting the same input produces an identical
file.
"""
from __future__ import annotations

import math
import os
import zlib

import numpy as np

from . import lz4frame, search
from .core import QuantizationSpec, StoreMetadata, Tier, normalize, quantize, dequantize
from .errors import DimensionMismatch, EmptyInput, ZeroVector
from .format import (
    ANN_HEADER,
    FORMAT_VERSION,
    GRAM_LEN,
    HEADER,
    KEY_LEN,
    MAGIC,
    NGRAM_ENTRY,
    NGRAM_HEADER,
    SEC_ANN,
    SEC_KEY_INDEX,
    SEC_METADATA,
    SEC_NGRAMS,
    SEC_STRING_HEAP,
    SEC_VECTORS,
    SECTION_ENTRY,
    encode_varint_array,
    pack_metadata,
)
from .oov import char_ngrams, shrink_repeats

# Floor on the stopword cutoff so that small stores keep a complete
# n-gram index; the 10% rule alone would empty it below ~10 keys.
_STOPWORD_FLOOR = 100
_STOPWORD_FRACTION = 0.10


def _stopword_limit(key_count: int) -> int:
    return max(_STOPWORD_FLOOR, math.ceil(_STOPWORD_FRACTION * key_count))


def _build_ngram_section(keys: list[str], ngram_min: int, ngram_max: int,
                         limit: int) -> bytes:
    postings: dict[bytes, list[int]] = {}
    for ordinal, key in enumerate(keys):
        for gram in char_ngrams(shrink_repeats(key), ngram_min, ngram_max):
            postings.setdefault(gram.encode("utf-8"), []).append(ordinal)
    kept = sorted(
        (gram, ords) for gram, ords in postings.items() if len(ords) <= limit
    )
    entry_area = NGRAM_HEADER.size + NGRAM_ENTRY.size * len(kept)
    gram_heap = bytearray()
    gram_offsets = []
    for gram, _ in kept:
        gram_offsets.append(entry_area + len(gram_heap))
        gram_heap += GRAM_LEN.pack(len(gram))
        gram_heap += gram
    postings_area = entry_area + len(gram_heap)
    blobs = []
    entries = bytearray(NGRAM_HEADER.pack(len(kept)))
    at = postings_area
    for (gram, ords), gram_off in zip(kept, gram_offsets):
        arr = np.asarray(ords, dtype=np.uint64)
        deltas = np.empty_like(arr)
        deltas[0] = arr[0]
        np.subtract(arr[1:], arr[:-1], out=deltas[1:])
        blob = encode_varint_array(deltas)
        entries += NGRAM_ENTRY.pack(gram_off, at, len(blob), len(ords))
        blobs.append(blob)
        at += len(blob)
    return bytes(entries) + bytes(gram_heap) + b"".join(blobs)


def _build_ann_section(ints: np.ndarray, qspec: QuantizationSpec,
                       n_trees: int, leaf_cap: int, build_seed: int) -> bytes:
    vectors = dequantize(ints, qspec)
    forest = search.build_forest(vectors, n_trees=n_trees,
                                 leaf_cap=leaf_cap, seed=build_seed)
    raw = search.serialize_forest(forest, qspec)
    frame = lz4frame.compress(raw)
    header = ANN_HEADER.pack(n_trees, leaf_cap, build_seed,
                             len(raw), zlib.crc32(raw), 0)
    return header + frame


def write_store(records, path: str, *, tier: Tier = Tier.MEDIUM,
                precision: int = 7, ngram_min: int = 3, ngram_max: int = 6,
                n_trees: int = search.DEFAULT_TREES,
                leaf_cap: int = search.DEFAULT_LEAF_CAP,
                build_seed: int = search.DEFAULT_BUILD_SEED) -> StoreMetadata:
    """Write `records` (iterable of (key, vector)) as a store file.

    Vectors are unit-normalized then quantized to `precision` decimal
    digits. Zero vectors are dropped and duplicate keys keep their last
    occurrence, both with counters recorded in the metadata. Returns the
    metadata of the finished store.
    """
    tier = Tier(tier)
    qspec = QuantizationSpec(precision)
    table: dict[str, np.ndarray] = {}
    dimension = None
    dropped = 0
    duplicates = 0
    for key, vector in records:
        if not key or key != key.strip():
            raise ValueError(f"key {key!r} is empty or has surrounding whitespace")
        arr = np.asarray(vector, dtype=np.float64)
        if dimension is None:
            dimension = arr.size
        elif arr.size != dimension:
            raise DimensionMismatch(
                f"record {key!r} has width {arr.size}, expected {dimension}"
            )
        try:
            unit = normalize(arr)
        except ZeroVector:
            dropped += 1
            continue
        if key in table:
            duplicates += 1
        table[key] = quantize(unit, qspec)
    if not table:
        raise EmptyInput("no records survived normalization")

    items = sorted(table.items(), key=lambda kv: kv[0].encode("utf-8"))
    keys = [key for key, _ in items]
    ints = np.vstack([row for _, row in items])

    heap = bytearray()
    offsets = np.empty(len(keys), dtype="<u8")
    for i, key in enumerate(keys):
        raw = key.encode("utf-8")
        offsets[i] = len(heap)
        heap += KEY_LEN.pack(len(raw))
        heap += raw

    stopword_limit = _stopword_limit(len(keys)) if tier >= Tier.MEDIUM else 0
    meta = StoreMetadata(
        dimension=dimension,
        key_count=len(keys),
        tier=tier,
        quantization=qspec,
        ngram_min=ngram_min,
        ngram_max=ngram_max,
        format_version=FORMAT_VERSION,
        stopword_limit=stopword_limit,
        dropped_zero_vectors=dropped,
        duplicate_keys=duplicates,
    )

    sections: list[tuple[int, bytes]] = [
        (SEC_METADATA, pack_metadata(meta)),
        (SEC_KEY_INDEX, offsets.tobytes()),
        (SEC_STRING_HEAP, bytes(heap)),
        (SEC_VECTORS, np.ascontiguousarray(ints).tobytes()),
    ]
    if tier >= Tier.MEDIUM:
        sections.append(
            (SEC_NGRAMS, _build_ngram_section(keys, ngram_min, ngram_max, stopword_limit))
        )
    if tier >= Tier.HEAVY:
        sections.append(
            (SEC_ANN, _build_ann_section(ints, qspec, n_trees, leaf_cap, build_seed))
        )

    offset = HEADER.size + SECTION_ENTRY.size * len(sections)
    entries = bytearray()
    for sec_id, payload in sections:
        entries += SECTION_ENTRY.pack(sec_id, offset, len(payload), zlib.crc32(payload))
        offset += len(payload)

    tmp = path + ".tmp"
    with open(tmp, "wb") as out:
        out.write(HEADER.pack(MAGIC, FORMAT_VERSION, 0, len(sections)))
        out.write(entries)
        for _, payload in sections:
            out.write(payload)
    os.replace(tmp, path)
    return meta
