import hashlib

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fcnledger import codec

# hand-assembled encodings, written out byte by byte
VECTORS = [
    (None, b"N"),
    (True, b"T"),
    (False, b"F"),
    (1, b"I\x00\x00\x00\x00\x00\x00\x00\x01"),
    (-2, b"I\xff\xff\xff\xff\xff\xff\xff\xfe"),
    (b"\x01\x02", b"B\x00\x00\x00\x02\x01\x02"),
    ("hé", b"S\x00\x00\x00\x03h\xc3\xa9"),
    ([1, None], b"L\x00\x00\x00\x02I\x00\x00\x00\x00\x00\x00\x00\x01N"),
    ({"b": True, "a": None}, b"D\x00\x00\x00\x02S\x00\x00\x00\x01aNS\x00\x00\x00\x01bT"),
]


@pytest.mark.parametrize("value,expected", VECTORS)
def test_known_vectors(value, expected):
    assert codec.encode(value) == expected
    assert codec.decode(expected) == value


def test_digest_is_sha256_of_encoding():
    assert codec.digest("abc") == hashlib.sha256(b"S\x00\x00\x00\x03abc").digest()


def test_dict_key_order_is_by_utf8_bytes():
    # "Z" (0x5a) sorts before "a" (0x61); insertion order is irrelevant
    assert codec.encode({"a": 1, "Z": 2}) == codec.encode({"Z": 2, "a": 1})
    assert codec.encode({"a": 1, "Z": 2}).index(b"Z") < codec.encode({"a": 1, "Z": 2}).index(b"a")


@pytest.mark.parametrize(
    "data",
    [
        b"",
        b"NN",
        b"I\x00\x00",
        b"X",
        b"S\x00\x00\x00\x02\xff\xfe",
        b"D\x00\x00\x00\x02S\x00\x00\x00\x01bNS\x00\x00\x00\x01aN",
        b"D\x00\x00\x00\x01I\x00\x00\x00\x00\x00\x00\x00\x01N",
    ],
)
def test_decode_rejects_malformed(data):
    with pytest.raises(codec.DecodeError):
        codec.decode(data)


def test_encode_rejects_unsupported_types():
    with pytest.raises(TypeError):
        codec.encode(1.5)
    with pytest.raises(TypeError):
        codec.encode({1: "x"})


def test_parse_hex_is_strict():
    assert codec.parse_hex("00ff", 2) == b"\x00\xff"
    for bad in ("00FF", "0", "zz", " 00"):
        with pytest.raises(ValueError):
            codec.parse_hex(bad)
    with pytest.raises(ValueError):
        codec.parse_hex("00", 2)


values = st.recursive(
    st.none() | st.booleans() | st.integers(-(2**63), 2**63 - 1) | st.binary(max_size=16) | st.text(max_size=8),
    lambda inner: st.lists(inner, max_size=4) | st.dictionaries(st.text(max_size=6), inner, max_size=4),
    max_leaves=12,
)


@given(values)
def test_round_trip(value):
    assert codec.decode(codec.encode(value)) == value


@given(values, values)
def test_encoding_is_injective(a, b):
    if a != b:
        assert codec.encode(a) != codec.encode(b)
