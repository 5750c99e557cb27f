"""Keccak-256 and the small byte-level helpers shared by every layer."""

from __future__ import annotations

import struct

from Crypto.Hash import keccak

HASH_LEN = 32
ZERO_HASH = bytes(HASH_LEN)


def keccak256(data: bytes) -> bytes:
    return keccak.new(digest_bits=256, data=data).digest()


EMPTY_ROOT = keccak256(b"")


def u16(n: int) -> bytes:
    return struct.pack(">H", n)


def u32(n: int) -> bytes:
    return struct.pack(">I", n)


def u64(n: int) -> bytes:
    return struct.pack(">Q", n)


def length_prefixed(*fields: bytes) -> bytes:
    """Concatenate fields, each preceded by its 4-byte big-endian length."""
    return b"".join(u32(len(f)) + f for f in fields)


def split_length_prefixed(data: bytes) -> list[bytes]:
    """Inverse of :func:`length_prefixed`; raises ValueError on any trailing or short data."""
    out = []
    pos = 0
    while pos < len(data):
        if pos + 4 > len(data):
            raise ValueError("truncated length prefix")
        (n,) = struct.unpack_from(">I", data, pos)
        pos += 4
        if pos + n > len(data):
            raise ValueError("field overruns buffer")
        out.append(data[pos : pos + n])
        pos += n
    return out


def short(h: bytes | None, n: int = 8) -> str:
    return "-" if h is None else h.hex()[:n]
