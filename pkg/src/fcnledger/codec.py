"""Canonical binary encoding and digests.

Every hashed or signed structure goes through :func:`encode`, a
length-prefixed, type-tagged serialization. Two independent encoders
that follow these rules produce identical bytes:

======  =====================================================
tag     body
======  =====================================================
``N``   none (no body)
``T``   boolean true (no body)
``F``   boolean false (no body)
``I``   8-byte big-endian signed integer
``B``   4-byte big-endian length, raw bytes
``S``   4-byte big-endian length, UTF-8 bytes
``L``   4-byte big-endian item count, encoded items in order
``D``   4-byte big-endian entry count, then ``S``-encoded key and
        encoded value per entry, keys sorted by their UTF-8 bytes
======  =====================================================

Records (transactions, block headers, world state) are dicts, so their
field order on the wire is the lexicographic order of the field names.
"""

from __future__ import annotations

import hashlib
import struct
from typing import Any

DIGEST_SIZE = 32
ZERO_DIGEST = bytes(DIGEST_SIZE)

_U32 = struct.Struct(">I")
_I64 = struct.Struct(">q")


class DecodeError(ValueError):
    pass


def encode(value: Any) -> bytes:
    out = bytearray()
    _encode_into(value, out)
    return bytes(out)


def _encode_into(value: Any, out: bytearray) -> None:
    # bool before int: bool is an int subclass
    if value is None:
        out += b"N"
    elif value is True:
        out += b"T"
    elif value is False:
        out += b"F"
    elif isinstance(value, int):
        out += b"I"
        out += _I64.pack(value)
    elif isinstance(value, (bytes, bytearray)):
        out += b"B"
        out += _U32.pack(len(value))
        out += value
    elif isinstance(value, str):
        raw = value.encode("utf-8")
        out += b"S"
        out += _U32.pack(len(raw))
        out += raw
    elif isinstance(value, (list, tuple)):
        out += b"L"
        out += _U32.pack(len(value))
        for item in value:
            _encode_into(item, out)
    elif isinstance(value, dict):
        items = []
        for key, item in value.items():
            if not isinstance(key, str):
                raise TypeError(f"dict keys must be str, got {type(key).__name__}")
            items.append((key.encode("utf-8"), item))
        items.sort(key=lambda kv: kv[0])
        out += b"D"
        out += _U32.pack(len(items))
        for raw_key, item in items:
            out += b"S"
            out += _U32.pack(len(raw_key))
            out += raw_key
            _encode_into(item, out)
    else:
        raise TypeError(f"cannot encode {type(value).__name__}")


def decode(data: bytes) -> Any:
    """Inverse of :func:`encode`. Rejects trailing bytes and unsorted dicts."""
    value, pos = _decode_at(data, 0)
    if pos != len(data):
        raise DecodeError(f"{len(data) - pos} trailing bytes")
    return value


def _take(data: bytes, pos: int, n: int) -> tuple[bytes, int]:
    end = pos + n
    if end > len(data):
        raise DecodeError("truncated input")
    return data[pos:end], end


def _decode_at(data: bytes, pos: int) -> tuple[Any, int]:
    tag, pos = _take(data, pos, 1)
    if tag == b"N":
        return None, pos
    if tag == b"T":
        return True, pos
    if tag == b"F":
        return False, pos
    if tag == b"I":
        raw, pos = _take(data, pos, 8)
        return _I64.unpack(raw)[0], pos
    if tag in (b"B", b"S"):
        raw, pos = _take(data, pos, 4)
        body, pos = _take(data, pos, _U32.unpack(raw)[0])
        if tag == b"B":
            return body, pos
        try:
            return body.decode("utf-8"), pos
        except UnicodeDecodeError as exc:
            raise DecodeError("invalid utf-8 in string") from exc
    if tag == b"L":
        raw, pos = _take(data, pos, 4)
        items = []
        for _ in range(_U32.unpack(raw)[0]):
            item, pos = _decode_at(data, pos)
            items.append(item)
        return items, pos
    if tag == b"D":
        raw, pos = _take(data, pos, 4)
        result: dict[str, Any] = {}
        previous: bytes | None = None
        for _ in range(_U32.unpack(raw)[0]):
            key, pos = _decode_at(data, pos)
            if not isinstance(key, str):
                raise DecodeError("dict key is not a string")
            raw_key = key.encode("utf-8")
            if previous is not None and raw_key <= previous:
                raise DecodeError("dict keys not strictly sorted")
            previous = raw_key
            result[key], pos = _decode_at(data, pos)
        return result, pos
    raise DecodeError(f"unknown tag {tag!r}")


def digest(value: Any) -> bytes:
    """SHA-256 of the canonical encoding."""
    return hashlib.sha256(encode(value)).digest()


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def parse_hex(text: str, size: int | None = None) -> bytes:
    """Strict lowercase hex; uppercase or odd-length input is rejected."""
    if not isinstance(text, str) or text != text.lower():
        raise ValueError("hex must be lowercase")
    raw = bytes.fromhex(text)
    if raw.hex() != text:
        raise ValueError("non-canonical hex")
    if size is not None and len(raw) != size:
        raise ValueError(f"expected {size} bytes, got {len(raw)}")
    return raw
