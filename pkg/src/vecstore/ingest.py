"""Streaming parsers for the embedding file formats the converter accepts.

Supported inputs: word2vec text (.txt with a "count dim" header line),
word2vec binary (.bin), GloVe text (.txt, headerless), and fastText
text (.vec, same layout as word2vec text). All parsers are single-pass
generators with bounded memory.
"""
from __future__ import annotations

import enum
import io
from typing import BinaryIO, Iterator, NamedTuple

import numpy as np

from .errors import DimensionDrift, MalformedRecord, UnknownFormat

_MAX_KEY_BYTES = 64 << 10
_READ_CHUNK = 64 << 10


class SourceFormat(enum.Enum):
    WORD2VEC_TEXT = "word2vec-text"
    WORD2VEC_BINARY = "word2vec-binary"
    GLOVE_TEXT = "glove-text"
    FASTTEXT_TEXT = "fasttext-text"


class ParsedRecord(NamedTuple):
    key: str
    vector: np.ndarray


def _is_int(token: str) -> bool:
    return token.isdigit()


def _is_float(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def _payload_is_text(payload: bytes) -> bool:
    """Heuristic: does this slice of file body look like UTF-8 text?"""
    if not payload:
        return True
    if any(b < 0x09 for b in payload):
        return False
    # A head sample may end mid-way through a multi-byte character.
    for trim in range(4):
        if trim >= len(payload):
            return True
        try:
            payload[:len(payload) - trim].decode("utf-8")
            return True
        except UnicodeDecodeError:
            continue
    return False


def detect_format(path_extension: str, head_bytes: bytes) -> SourceFormat:
    """Classify an input file from its extension and leading bytes.

    `head_bytes` should hold at least the first 128 bytes of the file
    (or the whole file if smaller). Contents decide between binary and
    text; the extension only picks the text dialect name.
    """
    ext = path_extension.lower()
    if not head_bytes.strip():
        raise UnknownFormat("file is empty")
    newline = head_bytes.find(b"\n")
    if newline >= 0:
        first_raw = head_bytes[:newline]
        truncated = False
    else:
        first_raw = head_bytes
        truncated = True
    try:
        first_line = first_raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise UnknownFormat(f"first line is not UTF-8: {exc}") from None
    fields = first_line.split()
    if truncated and fields:
        # The sample may have cut the last token short.
        fields = fields[:-1]
    if len(fields) == 2 and all(_is_int(f) for f in fields):
        payload = head_bytes[newline + 1:] if newline >= 0 else b""
        if not _payload_is_text(payload):
            return SourceFormat.WORD2VEC_BINARY
        if ext == ".bin":
            return SourceFormat.WORD2VEC_BINARY
        if ext == ".vec":
            return SourceFormat.FASTTEXT_TEXT
        return SourceFormat.WORD2VEC_TEXT
    if len(fields) >= 2 and all(_is_float(f) for f in fields[1:]):
        return SourceFormat.GLOVE_TEXT
    raise UnknownFormat(
        f"first line {first_line[:80]!r} is neither a 'count dim' header nor a 'token float...' record"
    )


class RecordStream:
    """Iterator over ParsedRecord values plus declared header facts.

    `declared_count` and `declared_dimension` come from the source
    header when the format carries one, and are populated before the
    first record is yielded. For text formats the declared count is
    advisory; the binary format reads exactly that many records since
    nothing else delimits them.
    """

    def __init__(self, stream: BinaryIO, fmt: SourceFormat):
        self.format = fmt
        self.declared_count: int | None = None
        self.declared_dimension: int | None = None
        if fmt is SourceFormat.WORD2VEC_BINARY:
            self._records = self._parse_binary(stream)
        elif fmt in (SourceFormat.WORD2VEC_TEXT, SourceFormat.FASTTEXT_TEXT):
            self._records = self._parse_text(stream, header=True)
        elif fmt is SourceFormat.GLOVE_TEXT:
            self._records = self._parse_text(stream, header=False)
        else:
            raise UnknownFormat(f"unhandled format {fmt}")
        # Materialize header fields eagerly.
        self._pending = next(self._records, None)

    def __iter__(self) -> Iterator[ParsedRecord]:
        if self._pending is not None:
            record, self._pending = self._pending, None
            yield record
        yield from self._records

    def _parse_text(self, stream: BinaryIO, header: bool) -> Iterator[ParsedRecord]:
        text = io.TextIOWrapper(stream, encoding="utf-8", newline="\n")
        line_no = 0
        dim = None
        try:
            if header:
                line_no += 1
                first = text.readline()
                fields = first.split()
                if len(fields) != 2 or not all(_is_int(f) for f in fields):
                    raise MalformedRecord("expected 'count dim' header", line=line_no)
                self.declared_count = int(fields[0])
                self.declared_dimension = dim = int(fields[1])
                if dim < 1:
                    raise MalformedRecord("declared dimension must be >= 1", line=line_no)
            for line in text:
                line_no += 1
                if not line.strip():
                    continue
                fields = line.split()
                key = fields[0]
                width = len(fields) - 1
                if width == 0:
                    raise MalformedRecord("record has no vector components", line=line_no)
                if dim is None:
                    dim = width
                    self.declared_dimension = width
                elif width != dim:
                    raise DimensionDrift(
                        f"record width {width} differs from established dimension {dim}",
                        line=line_no,
                    )
                try:
                    vector = np.array([float(f) for f in fields[1:]], dtype=np.float64)
                except ValueError as exc:
                    raise MalformedRecord(f"bad float: {exc}", line=line_no) from None
                yield ParsedRecord(key, vector)
        except UnicodeDecodeError as exc:
            raise MalformedRecord(f"invalid UTF-8: {exc}", line=line_no + 1) from None

    def _parse_binary(self, stream: BinaryIO) -> Iterator[ParsedRecord]:
        reader = _BufferedBytes(stream)
        header = reader.read_until(b"\n", limit=128)
        if header is None:
            raise MalformedRecord("missing 'count dim' header", offset=0)
        fields = header.decode("ascii", errors="replace").split()
        if len(fields) != 2 or not all(_is_int(f) for f in fields):
            raise MalformedRecord("expected 'count dim' header", offset=0)
        count = int(fields[0])
        dim = int(fields[1])
        if dim < 1:
            raise MalformedRecord("declared dimension must be >= 1", offset=0)
        self.declared_count = count
        self.declared_dimension = dim
        vec_bytes = dim * 4
        for _ in range(count):
            # A record may carry a single trailing newline; eat it here
            # so the next key does not start with one.
            reader.skip_one(b"\n")
            start = reader.offset
            key_raw = reader.read_until(b" ", limit=_MAX_KEY_BYTES)
            if key_raw is None:
                raise MalformedRecord("unexpected end of file in key", offset=start)
            try:
                key = key_raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise MalformedRecord(f"key is not UTF-8: {exc}", offset=start) from None
            if not key:
                raise MalformedRecord("empty key", offset=start)
            payload = reader.read_exact(vec_bytes)
            if payload is None:
                raise MalformedRecord("unexpected end of file in vector", offset=reader.offset)
            vector = np.frombuffer(payload, dtype="<f4", count=dim)
            yield ParsedRecord(key, vector)


class _BufferedBytes:
    """Minimal buffered reader with delimiter scans over a byte stream."""

    def __init__(self, stream: BinaryIO):
        self._stream = stream
        self._buf = b""
        self._pos = 0
        self.offset = 0

    def _fill(self) -> bool:
        chunk = self._stream.read(_READ_CHUNK)
        if not chunk:
            return False
        self._buf = self._buf[self._pos:] + chunk
        self._pos = 0
        return True

    def skip_one(self, byte: bytes) -> None:
        if self._pos >= len(self._buf) and not self._fill():
            return
        if self._buf[self._pos:self._pos + 1] == byte:
            self._pos += 1
            self.offset += 1

    def read_until(self, delim: bytes, limit: int):
        """Bytes before the next `delim` (consumed); None on EOF."""
        while True:
            idx = self._buf.find(delim, self._pos)
            if idx >= 0:
                if idx - self._pos > limit:
                    raise MalformedRecord(
                        f"token longer than {limit} bytes", offset=self.offset
                    )
                token = self._buf[self._pos:idx]
                self.offset += idx - self._pos + 1
                self._pos = idx + 1
                return token
            if len(self._buf) - self._pos > limit:
                raise MalformedRecord(
                    f"token longer than {limit} bytes", offset=self.offset
                )
            if not self._fill():
                return None

    def read_exact(self, n: int):
        """Exactly n bytes, or None if the stream ends first."""
        while len(self._buf) - self._pos < n:
            if not self._fill():
                return None
        out = self._buf[self._pos:self._pos + n]
        self._pos += n
        self.offset += n
        return out


def parse_embeddings(stream: BinaryIO, fmt: SourceFormat) -> RecordStream:
    """Parse `stream` as `fmt`, yielding records in file order."""
    return RecordStream(stream, fmt)
