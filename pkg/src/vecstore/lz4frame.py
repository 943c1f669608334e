"""LZ4 frame codec used for the compressed ANN section.

Implements the standard LZ4 frame format (magic 0x184D2204) with
independent blocks, a content-size field, and a content checksum, plus
the LZ4 block format with a greedy hash-table compressor. Output from
`compress` is a valid LZ4 frame readable by any conforming decoder, and
`decompress` accepts frames produced by other encoders as long as they
use a single frame without dictionaries.
"""
from __future__ import annotations

import struct

import xxhash

FRAME_MAGIC = 0x184D2204
_U32 = struct.Struct("<I")

# FLG: version 01, block-independent, content-size, content-checksum.
_FLG = 0x6C
# BD: 4 MiB max block size (code 7).
_BD = 0x70
_BLOCK_SIZES = {4: 64 << 10, 5: 256 << 10, 6: 1 << 20, 7: 4 << 20}
_BLOCK_LIMIT = _BLOCK_SIZES[7]

_HASH_MUL = 2654435761
_MIN_MATCH = 4
# Block format rules: the last 5 bytes are literals and the last match
# must start at least 12 bytes before the end of the block.
_LAST_LITERALS = 5
_MF_LIMIT = 12


def _hash4(word: int) -> int:
    return ((word * _HASH_MUL) & 0xFFFFFFFF) >> 16


def compress_block(src: bytes) -> bytes:
    """Compress one independent block; returns raw LZ4 block bytes."""
    n = len(src)
    out = bytearray()
    if n == 0:
        raise ValueError("cannot compress an empty block")
    mflimit = n - _MF_LIMIT
    matchlimit = n - _LAST_LITERALS
    anchor = 0
    if mflimit > 0:
        table: dict[int, int] = {}
        from_bytes = int.from_bytes
        ip = 0
        while True:
            # Find the next match, accelerating through incompressible
            # regions with a growing step.
            forward = ip
            step = 1
            search_nb = 1 << 6
            while True:
                ip = forward
                forward += step
                step = search_nb >> 6
                search_nb += 1
                if ip > mflimit:
                    break
                h = _hash4(from_bytes(src[ip:ip + 4], "little"))
                cand = table.get(h, -1)
                table[h] = ip
                if (
                    cand >= 0
                    and ip - cand <= 0xFFFF
                    and src[cand:cand + 4] == src[ip:ip + 4]
                ):
                    break
            if ip > mflimit:
                break
            while ip > anchor and cand > 0 and src[ip - 1] == src[cand - 1]:
                ip -= 1
                cand -= 1
            mlen = _MIN_MATCH
            limit = matchlimit
            while ip + mlen + 32 <= limit and src[cand + mlen:cand + mlen + 32] == src[ip + mlen:ip + mlen + 32]:
                mlen += 32
            while ip + mlen < limit and src[cand + mlen] == src[ip + mlen]:
                mlen += 1
            lit_len = ip - anchor
            ml = mlen - _MIN_MATCH
            out.append((min(lit_len, 15) << 4) | min(ml, 15))
            if lit_len >= 15:
                rem = lit_len - 15
                while rem >= 255:
                    out.append(255)
                    rem -= 255
                out.append(rem)
            out += src[anchor:ip]
            out += (ip - cand).to_bytes(2, "little")
            if ml >= 15:
                rem = ml - 15
                while rem >= 255:
                    out.append(255)
                    rem -= 255
                out.append(rem)
            anchor = ip = ip + mlen
    lit_len = n - anchor
    out.append(min(lit_len, 15) << 4)
    if lit_len >= 15:
        rem = lit_len - 15
        while rem >= 255:
            out.append(255)
            rem -= 255
        out.append(rem)
    out += src[anchor:]
    return bytes(out)


def decompress_block(block: bytes) -> bytes:
    """Decompress one raw LZ4 block."""
    n = len(block)
    if n == 0:
        raise ValueError("empty block")
    out = bytearray()
    pos = 0
    while True:
        if pos >= n:
            raise ValueError("truncated block")
        token = block[pos]
        pos += 1
        lit = token >> 4
        if lit == 15:
            while True:
                if pos >= n:
                    raise ValueError("truncated literal length")
                byte = block[pos]
                pos += 1
                lit += byte
                if byte != 255:
                    break
        if pos + lit > n:
            raise ValueError("literal run past end of block")
        out += block[pos:pos + lit]
        pos += lit
        if pos == n:
            return bytes(out)
        if pos + 2 > n:
            raise ValueError("truncated match offset")
        offset = block[pos] | (block[pos + 1] << 8)
        pos += 2
        if offset == 0:
            raise ValueError("zero match offset")
        if offset > len(out):
            raise ValueError("match offset beyond output")
        mlen = (token & 0xF) + _MIN_MATCH
        if token & 0xF == 15:
            while True:
                if pos >= n:
                    raise ValueError("truncated match length")
                byte = block[pos]
                pos += 1
                mlen += byte
                if byte != 255:
                    break
        src_pos = len(out) - offset
        remaining = mlen
        while remaining:
            take = min(remaining, len(out) - src_pos)
            out += out[src_pos:src_pos + take]
            remaining -= take
            src_pos += take


def compress(data: bytes) -> bytes:
    """Wrap `data` in a single LZ4 frame."""
    descriptor = bytes([_FLG, _BD]) + len(data).to_bytes(8, "little")
    hc = (xxhash.xxh32_intdigest(descriptor) >> 8) & 0xFF
    out = bytearray(_U32.pack(FRAME_MAGIC))
    out += descriptor
    out.append(hc)
    for start in range(0, len(data), _BLOCK_LIMIT):
        chunk = data[start:start + _BLOCK_LIMIT]
        packed = compress_block(chunk)
        if len(packed) < len(chunk):
            out += _U32.pack(len(packed))
            out += packed
        else:
            out += _U32.pack(len(chunk) | 0x80000000)
            out += chunk
    out += _U32.pack(0)
    out += _U32.pack(xxhash.xxh32_intdigest(bytes(data)))
    return bytes(out)


def decompress(frame: bytes) -> bytes:
    """Decode a single LZ4 frame produced by `compress` or any encoder
    that emits one dictionary-free frame."""
    if len(frame) < 7:
        raise ValueError("frame too short")
    (magic,) = _U32.unpack_from(frame, 0)
    if magic != FRAME_MAGIC:
        raise ValueError(f"bad frame magic 0x{magic:08X}")
    flg = frame[4]
    bd = frame[5]
    if (flg >> 6) != 0b01:
        raise ValueError("unsupported frame version")
    if flg & 0x02:
        raise ValueError("reserved FLG bit set")
    if flg & 0x01:
        raise ValueError("dictionaries are not supported")
    block_checksum = bool(flg & 0x10)
    content_size_present = bool(flg & 0x08)
    content_checksum = bool(flg & 0x04)
    size_code = (bd >> 4) & 0x07
    if bd & 0x8F or size_code not in _BLOCK_SIZES:
        raise ValueError("bad BD byte")
    max_block = _BLOCK_SIZES[size_code]
    pos = 6
    content_size = None
    if content_size_present:
        if pos + 8 > len(frame):
            raise ValueError("truncated frame header")
        content_size = int.from_bytes(frame[pos:pos + 8], "little")
        pos += 8
    if pos >= len(frame):
        raise ValueError("truncated frame header")
    expected_hc = (xxhash.xxh32_intdigest(frame[4:pos]) >> 8) & 0xFF
    if frame[pos] != expected_hc:
        raise ValueError("frame header checksum mismatch")
    pos += 1
    out = bytearray()
    while True:
        if pos + 4 > len(frame):
            raise ValueError("truncated block header")
        (word,) = _U32.unpack_from(frame, pos)
        pos += 4
        if word == 0:
            break
        raw = bool(word & 0x80000000)
        size = word & 0x7FFFFFFF
        if size > max_block:
            raise ValueError("block larger than declared maximum")
        if pos + size > len(frame):
            raise ValueError("truncated block")
        payload = frame[pos:pos + size]
        pos += size
        if block_checksum:
            if pos + 4 > len(frame):
                raise ValueError("truncated block checksum")
            (stored,) = _U32.unpack_from(frame, pos)
            pos += 4
            if xxhash.xxh32_intdigest(payload) != stored:
                raise ValueError("block checksum mismatch")
        if raw:
            out += payload
        else:
            decoded = decompress_block(payload)
            if len(decoded) > max_block:
                raise ValueError("decoded block larger than declared maximum")
            out += decoded
    if content_checksum:
        if pos + 4 > len(frame):
            raise ValueError("truncated content checksum")
        (stored,) = _U32.unpack_from(frame, pos)
        pos += 4
        if xxhash.xxh32_intdigest(bytes(out)) != stored:
            raise ValueError("content checksum mismatch")
    if content_size is not None and content_size != len(out):
        raise ValueError("content size mismatch")
    return bytes(out)
