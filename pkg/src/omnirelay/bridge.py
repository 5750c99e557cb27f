"""One-directional lock/mint token bridge on top of the messaging layer.

The lock and the cross-chain message live in a single source transaction;
the destination side mints when the endpoint hands it the payload.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .chain import ChainState, Transaction, TxId, TxKind
from .endpoint import Endpoint, Origin
from .packet import ADDRESS_LEN, Dst, Packet, RelayerArgs, check_address

PAYLOAD_LEN = ADDRESS_LEN + 8
DEFAULT_BRIDGE_ADDRESS = bytes.fromhex("b1" * ADDRESS_LEN)


class BridgeError(Exception):
    pass


class InsufficientBalance(BridgeError):
    pass


class ZeroAmount(BridgeError):
    pass


class MalformedPayload(BridgeError):
    pass


@dataclass(frozen=True)
class BridgePayload:
    recipient: bytes
    amount: int

    def encode(self) -> bytes:
        return check_address(self.recipient) + struct.pack(">Q", self.amount)

    @classmethod
    def decode(cls, data: bytes) -> BridgePayload:
        if len(data) != PAYLOAD_LEN:
            raise MalformedPayload(f"bridge payload must be {PAYLOAD_LEN} bytes, got {len(data)}")
        return cls(bytes(data[:ADDRESS_LEN]), struct.unpack(">Q", data[ADDRESS_LEN:])[0])


@dataclass
class BridgeLedger:
    chain: int
    balances: dict[bytes, int] = field(default_factory=dict)
    locked: int = 0
    minted: int = 0
    locked_to: dict[int, int] = field(default_factory=dict)
    minted_from: dict[int, int] = field(default_factory=dict)
    credits: list[tuple[Origin, bytes, int]] = field(default_factory=list)
    parked: list[tuple[Origin, bytes]] = field(default_factory=list)

    def fund(self, user: bytes, amount: int) -> None:
        self.balances[user] = self.balances.get(user, 0) + amount


class BridgeApp:
    """The bridge contract deployed at the same address on every chain."""

    def __init__(self, ledger: BridgeLedger, chain: ChainState, endpoint: Endpoint, address: bytes = DEFAULT_BRIDGE_ADDRESS):
        self.ledger = ledger
        self.chain = chain
        self.endpoint = endpoint
        self.address = check_address(address)
        endpoint.register_handler(self.address, self.on_delivery)

    def lock_and_send(self, user: bytes, amount: int, dst: Dst, recipient: bytes, *, nonce: int, fee: int = 0) -> TxId:
        ledger = self.ledger
        if amount <= 0:
            raise ZeroAmount("amount must be positive")
        if ledger.balances.get(user, 0) < amount:
            raise InsufficientBalance(f"balance {ledger.balances.get(user, 0)} < {amount}")
        payload = BridgePayload(recipient, amount).encode()
        args = RelayerArgs(user, fee)
        tx = Transaction(self.chain.chain_id, user, TxKind.APP_CALL, Packet(dst, payload), args, nonce)
        t = self.chain.submit_transaction(tx)
        try:
            self.endpoint.send(tx, t, dst, payload, args)
        except Exception:
            self.chain.revert_transaction(t.digest)
            raise
        ledger.balances[user] -= amount
        ledger.locked += amount
        ledger.locked_to[dst.chain] = ledger.locked_to.get(dst.chain, 0) + amount
        return t

    def on_delivery(self, payload: bytes, origin: Origin) -> None:
        try:
            msg = BridgePayload.decode(payload)
        except MalformedPayload:
            self.ledger.parked.append((origin, payload))
            return
        ledger = self.ledger
        ledger.fund(msg.recipient, msg.amount)
        ledger.minted += msg.amount
        ledger.minted_from[origin.src_chain] = ledger.minted_from.get(origin.src_chain, 0) + msg.amount
        ledger.credits.append((origin, msg.recipient, msg.amount))


def bridge_lock_and_send(app: BridgeApp, user: bytes, amount: int, dst: Dst, recipient: bytes, *, nonce: int, fee: int = 0) -> TxId:
    return app.lock_and_send(user, amount, dst, recipient, nonce=nonce, fee=fee)


def bridge_on_delivery(app: BridgeApp, payload: bytes, origin: Origin) -> None:
    app.on_delivery(payload, origin)
