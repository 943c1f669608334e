"""Lazy memory-mapped reader for store files.

Opening reads only the header, section table, and metadata section with
positioned reads, then maps the file; key index and vector block are
zero-copy views into the mapping, so pages are faulted in on demand.
The approximate-search forest is decompressed at most once, on first
use, under a lock.
"""
from __future__ import annotations

import mmap
import os
import threading
import zlib

import numpy as np

from . import lz4frame
from .core import StoreMetadata, Tier, dequantize
from .errors import (
    BadMagic,
    CorruptAnnSection,
    OrdinalOutOfRange,
    TierUnsupported,
    TruncatedFile,
    UnsupportedVersion,
    VecstoreError,
)
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
    decode_varint_array,
    unpack_metadata,
)
from .oov import OovContext, oov_vector
from .search import ProjectionForest, deserialize_forest

_NORM_CHUNK = 8192


class StoreReader:
    """Shared-read view of one immutable store file."""

    def __init__(self, path: str):
        self.path = os.fspath(path)
        self.bytes_read_at_open = 0
        self._file = open(self.path, "rb", buffering=0)
        try:
            self._open()
        except Exception:
            self._file.close()
            raise

    def _pread(self, length: int, offset: int) -> bytes:
        data = os.pread(self._file.fileno(), length, offset)
        self.bytes_read_at_open += len(data)
        if len(data) != length:
            raise TruncatedFile(
                f"wanted {length} bytes at offset {offset}, file ends after {len(data)}"
            )
        return data

    def _open(self):
        size = os.fstat(self._file.fileno()).st_size
        if size < HEADER.size:
            raise TruncatedFile(f"file is {size} bytes, header needs {HEADER.size}")
        magic, version, _flags, section_count = HEADER.unpack(self._pread(HEADER.size, 0))
        if magic != MAGIC:
            raise BadMagic(f"expected {MAGIC!r} at offset 0, found {magic!r}")
        if version != FORMAT_VERSION:
            raise UnsupportedVersion(f"format version {version}, reader supports {FORMAT_VERSION}")
        table = self._pread(SECTION_ENTRY.size * section_count, HEADER.size)
        self._sections: dict[int, tuple[int, int, int]] = {}
        for i in range(section_count):
            sec_id, offset, length, crc = SECTION_ENTRY.unpack_from(table, i * SECTION_ENTRY.size)
            if offset + length > size:
                raise TruncatedFile(
                    f"section {sec_id} claims bytes {offset}..{offset + length}, file is {size}"
                )
            self._sections[sec_id] = (offset, length, crc)
        for required in (SEC_METADATA, SEC_KEY_INDEX, SEC_STRING_HEAP, SEC_VECTORS):
            if required not in self._sections:
                raise TruncatedFile(f"missing required section {required}")

        meta_off, meta_len, meta_crc = self._sections[SEC_METADATA]
        meta_raw = self._pread(meta_len, meta_off)
        if zlib.crc32(meta_raw) != meta_crc:
            raise VecstoreError("metadata section checksum mismatch")
        self.metadata: StoreMetadata = unpack_metadata(meta_raw)

        self._mm = mmap.mmap(self._file.fileno(), 0, access=mmap.ACCESS_READ)
        count = self.metadata.key_count
        dim = self.metadata.dimension

        idx_off, idx_len, _ = self._sections[SEC_KEY_INDEX]
        if idx_len != count * 8:
            raise TruncatedFile(f"key index holds {idx_len} bytes, need {count * 8}")
        self._key_offsets = np.frombuffer(self._mm, dtype="<u8", count=count, offset=idx_off)

        self._heap_start, self._heap_len, _ = self._sections[SEC_STRING_HEAP]

        vec_off, vec_len, _ = self._sections[SEC_VECTORS]
        qspec = self.metadata.quantization
        expected = count * dim * qspec.byte_width
        if vec_len != expected:
            raise TruncatedFile(f"vector block holds {vec_len} bytes, need {expected}")
        self.vector_ints = np.frombuffer(
            self._mm, dtype=qspec.int_dtype, count=count * dim, offset=vec_off
        ).reshape(count, dim)

        self._ngram_entries = None
        self._ngram_base = 0
        self._forest: ProjectionForest | None = None
        self._norms: np.ndarray | None = None
        self._lock = threading.Lock()
        self.ann_decompress_count = 0
        self.oov_context = OovContext(
            ngram_min=self.metadata.ngram_min, ngram_max=self.metadata.ngram_max
        )

    # --- key access ---

    def __len__(self) -> int:
        return self.metadata.key_count

    @property
    def dimension(self) -> int:
        return self.metadata.dimension

    def _key_bytes(self, ordinal: int) -> bytes:
        offset = self._heap_start + int(self._key_offsets[ordinal])
        (length,) = KEY_LEN.unpack_from(self._mm, offset)
        start = offset + KEY_LEN.size
        return self._mm[start:start + length]

    def key_at(self, ordinal: int) -> str:
        if not 0 <= ordinal < self.metadata.key_count:
            raise OrdinalOutOfRange(f"ordinal {ordinal} outside [0, {self.metadata.key_count})")
        return self._key_bytes(ordinal).decode("utf-8")

    def keys(self):
        """Iterate all keys in index (byte-sorted) order."""
        for ordinal in range(self.metadata.key_count):
            yield self._key_bytes(ordinal).decode("utf-8")

    def lookup_key(self, key: str):
        """Ordinal of the exact key, or None when absent."""
        target = key.encode("utf-8")
        lo, hi = 0, self.metadata.key_count
        while lo < hi:
            mid = (lo + hi) // 2
            probe = self._key_bytes(mid)
            if probe < target:
                lo = mid + 1
            elif probe > target:
                hi = mid
            else:
                return mid
        return None

    def contains(self, key: str) -> bool:
        return self.lookup_key(key) is not None

    def __contains__(self, key: str) -> bool:
        return self.contains(key)

    # --- vector access ---

    def read_vector(self, ordinal: int) -> np.ndarray:
        """Dequantized float32 vector of the given ordinal."""
        if not 0 <= ordinal < self.metadata.key_count:
            raise OrdinalOutOfRange(f"ordinal {ordinal} outside [0, {self.metadata.key_count})")
        return dequantize(self.vector_ints[ordinal], self.metadata.quantization)

    def query(self, key: str) -> np.ndarray:
        """Vector for a key: stored when present, synthesized otherwise."""
        ordinal = self.lookup_key(key)
        if ordinal is not None:
            return self.read_vector(ordinal)
        return oov_vector(self, key, self.oov_context)

    def row_norms(self) -> np.ndarray:
        """Float64 norms of every dequantized row, computed once."""
        if self._norms is None:
            with self._lock:
                if self._norms is None:
                    ints = self.vector_ints
                    scale = self.metadata.quantization.scale
                    norms = np.empty(ints.shape[0], dtype=np.float64)
                    for start in range(0, ints.shape[0], _NORM_CHUNK):
                        stop = min(start + _NORM_CHUNK, ints.shape[0])
                        rows = (ints[start:stop] / scale).astype(np.float32).astype(np.float64)
                        norms[start:stop] = np.sqrt((rows * rows).sum(axis=1))
                    self._norms = norms
        return self._norms

    # --- n-gram postings ---

    def _ngram_table(self):
        if self._ngram_entries is None:
            offset, length, _ = self._sections[SEC_NGRAMS]
            (count,) = NGRAM_HEADER.unpack_from(self._mm, offset)
            dtype = np.dtype([("gram", "<u8"), ("post", "<u8"),
                              ("len", "<u4"), ("doc", "<u4")])
            entries = np.frombuffer(
                self._mm, dtype=dtype, count=count, offset=offset + NGRAM_HEADER.size
            )
            self._ngram_base = offset
            self._ngram_entries = entries
        return self._ngram_entries

    def _gram_bytes(self, entry_offset: int) -> bytes:
        at = self._ngram_base + entry_offset
        (length,) = GRAM_LEN.unpack_from(self._mm, at)
        start = at + GRAM_LEN.size
        return self._mm[start:start + length]

    def ngram_postings(self, ngram: str) -> list[int]:
        """Ascending ordinals of keys whose padded n-gram set has `ngram`."""
        if self.metadata.tier < Tier.MEDIUM:
            raise TierUnsupported("this store was written without an n-gram index")
        entries = self._ngram_table()
        target = ngram.encode("utf-8")
        lo, hi = 0, entries.shape[0]
        while lo < hi:
            mid = (lo + hi) // 2
            probe = self._gram_bytes(int(entries["gram"][mid]))
            if probe < target:
                lo = mid + 1
            elif probe > target:
                hi = mid
            else:
                start = self._ngram_base + int(entries["post"][mid])
                blob = self._mm[start:start + int(entries["len"][mid])]
                deltas = decode_varint_array(blob)
                ordinals = np.cumsum(deltas.astype(np.int64))
                if ordinals.size != int(entries["doc"][mid]):
                    raise VecstoreError(f"postings length mismatch for {ngram!r}")
                return ordinals.tolist()
        return []

    # --- approximate-search forest ---

    def load_ann(self) -> ProjectionForest:
        """Decompress and cache the search forest (first call only)."""
        if self.metadata.tier < Tier.HEAVY:
            raise TierUnsupported("this store was written without a search forest")
        if self._forest is not None:
            return self._forest
        with self._lock:
            if self._forest is None:
                offset, length, _ = self._sections[SEC_ANN]
                header = self._mm[offset:offset + ANN_HEADER.size]
                n_trees, leaf_cap, build_seed, raw_len, raw_crc, _ = ANN_HEADER.unpack(header)
                frame = self._mm[offset + ANN_HEADER.size:offset + length]
                try:
                    raw = lz4frame.decompress(frame)
                except ValueError as exc:
                    raise CorruptAnnSection(f"forest decompression failed: {exc}") from None
                if len(raw) != raw_len or zlib.crc32(raw) != raw_crc:
                    raise CorruptAnnSection("forest payload failed its integrity check")
                self.ann_decompress_count += 1
                self._forest = deserialize_forest(raw, leaf_cap, build_seed)
        return self._forest

    # --- lifecycle ---

    def close(self):
        """Release the mapping. Views handed out earlier become invalid."""
        self._key_offsets = None
        self.vector_ints = None
        self._ngram_entries = None
        self._forest = None
        try:
            self._mm.close()
        except BufferError:
            pass
        self._file.close()

    def __enter__(self) -> "StoreReader":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def open_store(path: str) -> StoreReader:
    """Open a store file for shared reading."""
    return StoreReader(path)
