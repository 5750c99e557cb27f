"""Routing types and the EVM packet layout.

Wire form::

    | Chain ID (2 bytes, BE) | Address (20 bytes) | User Arg (N bytes) |
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

ADDRESS_LEN = 20
CHAIN_ID_MAX = 0xFFFF
PACKET_HEADER_LEN = 2 + ADDRESS_LEN
DEFAULT_MAX_PAYLOAD = 64 * 1024


class TruncatedPacket(ValueError):
    pass


def check_chain_id(chain: int) -> int:
    if not isinstance(chain, int) or not 0 <= chain <= CHAIN_ID_MAX:
        raise ValueError(f"chain id must fit in 16 bits, got {chain!r}")
    return chain


def check_address(addr: bytes) -> bytes:
    if not isinstance(addr, (bytes, bytearray)) or len(addr) != ADDRESS_LEN:
        raise ValueError(f"address must be exactly {ADDRESS_LEN} bytes")
    return bytes(addr)


@dataclass(frozen=True)
class Dst:
    chain: int
    address: bytes

    def __post_init__(self) -> None:
        check_chain_id(self.chain)
        object.__setattr__(self, "address", check_address(self.address))


@dataclass(frozen=True)
class Packet:
    dst: Dst
    payload: bytes = b""


@dataclass(frozen=True)
class RelayerArgs:
    """Payment hints for the relayer. Opaque to the endpoint."""

    payee: bytes = bytes(ADDRESS_LEN)
    max_fee: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "payee", check_address(self.payee))
        if not 0 <= self.max_fee < 2**64:
            raise ValueError("max_fee must be an unsigned 64-bit integer")

    def encode(self) -> bytes:
        return self.payee + struct.pack(">Q", self.max_fee)

    @classmethod
    def decode(cls, data: bytes) -> RelayerArgs:
        if len(data) != ADDRESS_LEN + 8:
            raise ValueError("relayer args must be 28 bytes")
        return cls(data[:ADDRESS_LEN], struct.unpack(">Q", data[ADDRESS_LEN:])[0])


def encode_packet(p: Packet) -> bytes:
    return struct.pack(">H", p.dst.chain) + p.dst.address + p.payload


def decode_packet(b: bytes) -> Packet:
    if len(b) < PACKET_HEADER_LEN:
        raise TruncatedPacket(f"packet needs at least {PACKET_HEADER_LEN} bytes, got {len(b)}")
    (chain,) = struct.unpack_from(">H", b, 0)
    return Packet(Dst(chain, bytes(b[2:PACKET_HEADER_LEN])), bytes(b[PACKET_HEADER_LEN:]))


@dataclass(frozen=True)
class PacketCodec:
    """A Library's packet codec. Only the EVM layout exists today."""

    name: str = "evm"

    def encode(self, p: Packet) -> bytes:
        return encode_packet(p)

    def decode(self, b: bytes) -> Packet:
        return decode_packet(b)


EVM_CODEC = PacketCodec("evm")
