import pytest
from hypothesis import given
from hypothesis import strategies as st

from omnirelay.hashing import EMPTY_ROOT, keccak256, length_prefixed, split_length_prefixed


def test_keccak_vectors():
    # Keccak-256 (pre-standard padding), not SHA3-256
    assert keccak256(b"").hex() == "c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470"
    assert keccak256(b"abc").hex() == "4e03657aea45a94fc7d47ba826c8d667c0d1e6e33a64a036ec44f58fa12d6c45"
    assert EMPTY_ROOT == keccak256(b"")


@given(st.lists(st.binary(max_size=40), max_size=8))
def test_length_prefixed_round_trip(fields):
    assert split_length_prefixed(length_prefixed(*fields)) == fields


@pytest.mark.parametrize("data", [b"\x00", b"\x00\x00\x00\x05abc", b"\x00\x00\x00\x01a\x00"])
def test_split_rejects_short_input(data):
    with pytest.raises(ValueError):
        split_length_prefixed(data)
