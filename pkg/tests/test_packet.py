import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import packet_wire
from omnirelay.packet import (
    EVM_CODEC,
    PACKET_HEADER_LEN,
    Dst,
    Packet,
    RelayerArgs,
    TruncatedPacket,
    decode_packet,
    encode_packet,
)

chains = st.integers(0, 0xFFFF)
addresses = st.binary(min_size=20, max_size=20)
packets = st.builds(Packet, st.builds(Dst, chains, addresses), st.binary(max_size=300))


def test_header_is_chain_id_then_address():
    assert PACKET_HEADER_LEN == 22
    p = Packet(Dst(0x0102, bytes(range(20))), b"xyz")
    assert encode_packet(p) == b"\x01\x02" + bytes(range(20)) + b"xyz"


@given(packets)
def test_matches_reference_layout(p):
    wire = encode_packet(p)
    assert wire == packet_wire(p.dst.chain, p.dst.address, p.payload)
    assert len(wire) == 22 + len(p.payload)
    assert decode_packet(wire) == p
    assert EVM_CODEC.decode(EVM_CODEC.encode(p)) == p


@given(st.binary(max_size=21))
def test_truncated_rejected(data):
    with pytest.raises(TruncatedPacket):
        decode_packet(data)


def test_empty_payload_is_exactly_header():
    p = decode_packet(bytes(22))
    assert p.payload == b"" and p.dst.chain == 0


@pytest.mark.parametrize("chain", [-1, 0x10000])
def test_chain_id_range(chain):
    with pytest.raises(ValueError):
        Dst(chain, bytes(20))


@pytest.mark.parametrize("addr", [b"", bytes(19), bytes(21)])
def test_address_length(addr):
    with pytest.raises(ValueError):
        Dst(1, addr)


@given(addresses, st.integers(0, 2**64 - 1))
def test_relayer_args_round_trip(payee, fee):
    args = RelayerArgs(payee, fee)
    assert len(args.encode()) == 28
    assert RelayerArgs.decode(args.encode()) == args


def test_relayer_args_fee_bounds():
    with pytest.raises(ValueError):
        RelayerArgs(bytes(20), 2**64)
