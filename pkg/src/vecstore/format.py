"""Binary container layout: header, section table, metadata struct, varints.

Everything on disk is little-endian. See docs/format.md for the byte-exact
layout contract. The file begins with a fixed header and a section table;
each section's payload is covered by a CRC-32 recorded in the table, and
the file is immutable once the writer finalizes it.
"""
from __future__ import annotations

import struct

import numpy as np

from .core import QuantizationSpec, StoreMetadata, Tier

MAGIC = b"MVST"
FORMAT_VERSION = 1

SEC_METADATA = 1
SEC_KEY_INDEX = 2
SEC_STRING_HEAP = 3
SEC_VECTORS = 4
SEC_NGRAMS = 5
SEC_ANN = 6

# magic, u16 version, u16 flags, u32 section count
HEADER = struct.Struct("<4sHHI")
# u32 section id, u64 offset, u64 length, u32 crc32
SECTION_ENTRY = struct.Struct("<IQQI")
# u32 format_version, u32 dimension, u64 key_count, u8 tier, u8 precision,
# u8 byte_width, u8 ngram_min, u8 ngram_max, u8 hash_id, u8 prng_id, pad,
# u32 stopword_limit, u32 dropped_zero_vectors, u32 duplicate_keys
METADATA = struct.Struct("<IIQBBBBBBBxIII")
# u32 key byte length prefix in the string heap
KEY_LEN = struct.Struct("<I")
# u64 heap offset per ordinal in the key index
KEY_OFFSET = struct.Struct("<Q")
# n-gram dictionary entry: u64 gram offset, u64 postings offset (both
# relative to section start), u32 postings byte length, u32 doc count
NGRAM_ENTRY = struct.Struct("<QQII")
# u16 gram byte length prefix in the n-gram heap
GRAM_LEN = struct.Struct("<H")
# u64 gram count at the head of the n-gram section
NGRAM_HEADER = struct.Struct("<Q")
# ANN section header: u32 n_trees, u32 leaf_cap, u64 build_seed,
# u64 raw (pre-compression) length, u32 raw crc32, u32 reserved
ANN_HEADER = struct.Struct("<IIQQII")


def pack_metadata(meta: StoreMetadata) -> bytes:
    return METADATA.pack(
        meta.format_version,
        meta.dimension,
        meta.key_count,
        int(meta.tier),
        meta.quantization.precision,
        meta.quantization.byte_width,
        meta.ngram_min,
        meta.ngram_max,
        meta.hash_algorithm_id,
        meta.prng_id,
        meta.stopword_limit,
        meta.dropped_zero_vectors,
        meta.duplicate_keys,
    )


def unpack_metadata(buf: bytes) -> StoreMetadata:
    (fver, dim, count, tier, precision, byte_width, nmin, nmax,
     hash_id, prng_id, stopword_limit, dropped, dups) = METADATA.unpack(buf)
    spec = QuantizationSpec(precision)
    if spec.byte_width != byte_width:
        raise ValueError(f"stored byte width {byte_width} conflicts with precision {precision}")
    return StoreMetadata(
        dimension=dim,
        key_count=count,
        tier=Tier(tier),
        quantization=spec,
        ngram_min=nmin,
        ngram_max=nmax,
        hash_algorithm_id=hash_id,
        prng_id=prng_id,
        format_version=fver,
        stopword_limit=stopword_limit,
        dropped_zero_vectors=dropped,
        duplicate_keys=dups,
    )


def encode_varint(value: int, out: bytearray) -> None:
    """Append an unsigned LEB128 varint."""
    if value < 0:
        raise ValueError("varints are unsigned")
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return


def decode_varint(buf, pos: int) -> tuple[int, int]:
    """Decode one varint at `pos`; returns (value, next position)."""
    result = 0
    shift = 0
    while True:
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7


def encode_varint_array(values) -> bytes:
    """Vectorized unsigned LEB128 encoding of an integer array."""
    v = np.ascontiguousarray(values, dtype=np.uint64)
    if v.size == 0:
        return b""
    widths = np.ones(v.shape, dtype=np.int64)
    for k in range(1, 10):
        widths[v >= (np.uint64(1) << np.uint64(7 * k))] = k + 1
    starts = np.zeros(v.size + 1, dtype=np.int64)
    np.cumsum(widths, out=starts[1:])
    out = np.zeros(starts[-1], dtype=np.uint8)
    for k in range(int(widths.max())):
        mask = widths > k
        byte = ((v[mask] >> np.uint64(7 * k)) & np.uint64(0x7F)).astype(np.uint8)
        cont = (widths[mask] - 1 > k).astype(np.uint8) << 7
        out[starts[:-1][mask] + k] = byte | cont
    return out.tobytes()


def decode_varint_array(buf) -> np.ndarray:
    """Vectorized decode of a back-to-back unsigned LEB128 run."""
    b = np.frombuffer(buf, dtype=np.uint8)
    if b.size == 0:
        return np.empty(0, dtype=np.uint64)
    terminal = (b & 0x80) == 0
    if not terminal[-1]:
        raise ValueError("truncated varint run")
    ends = np.flatnonzero(terminal)
    starts = np.empty_like(ends)
    starts[0] = 0
    starts[1:] = ends[:-1] + 1
    spans = ends - starts + 1
    if int(spans.max()) > 10:
        raise ValueError("varint longer than 10 bytes")
    payload = (b & 0x7F).astype(np.uint64)
    out = np.zeros(ends.size, dtype=np.uint64)
    for k in range(int(spans.max())):
        mask = spans > k
        out[mask] |= payload[starts[mask] + k] << np.uint64(7 * k)
    return out


def encode_deltas(ordinals) -> bytes:
    """Delta-encode an ascending ordinal sequence as varints."""
    out = bytearray()
    prev = 0
    first = True
    for o in ordinals:
        encode_varint(o if first else o - prev, out)
        prev = o
        first = False
    return bytes(out)


def decode_deltas(buf, pos: int, end: int) -> list[int]:
    """Decode delta varints in buf[pos:end] back to ascending ordinals."""
    out = []
    value = 0
    shift = 0
    acc = 0
    first = True
    while pos < end:
        byte = buf[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        if byte & 0x80:
            shift += 7
            continue
        acc = value if first else acc + value
        out.append(acc)
        first = False
        value = 0
        shift = 0
    if shift:
        raise ValueError("truncated varint run")
    return out
