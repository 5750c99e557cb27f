from dataclasses import replace

import pytest

from omnirelay.bus import Bus
from omnirelay.chain import BlockHeader, ChainState, Transaction, TxKind
from omnirelay.endpoint import (
    AlreadyRegistered,
    CouplingError,
    Endpoint,
    Origin,
    PayloadTooLarge,
    Submission,
    UnknownDestinationChain,
)
from omnirelay.events import Step
from omnirelay.packet import Dst, Packet, RelayerArgs
from omnirelay.proofs import BINARY_MERKLE, MERKLE_PATRICIA, TxTrie

ADDR = b"\x11" * 20


class World:
    def __init__(self, depth=2):
        self.bus = Bus()
        self.log = self.bus.log
        self.a = ChainState(1, depth)
        self.b = ChainState(2, depth, BINARY_MERKLE)
        self.ep_a = Endpoint(1, self.bus, max_payload=64, proof_timeout=5)
        self.ep_b = Endpoint(2, self.bus, proof_timeout=5)
        for ep in (self.ep_a, self.ep_b):
            ep.register_library(1, MERKLE_PATRICIA)
            ep.register_library(2, BINARY_MERKLE)
        self.nonce = 0

    def send(self, payload=b"p", dst=2):
        self.nonce += 1
        tx = Transaction(1, bytes(20), TxKind.APP_CALL, Packet(Dst(dst, ADDR), payload), RelayerArgs(), self.nonce)
        t = self.a.submit_transaction(tx)
        self.ep_a.send(tx, t, Dst(dst, ADDR), payload, RelayerArgs())
        return tx

    def mine(self):
        self.a.mine_block()
        block = self.a.canonical[-1]
        self.ep_a.on_block(block)
        return block

    def submission(self, tx, block=None):
        block = block or self.a.block_by_hash(self.a.canonical[self.a.tx_id(tx.digest).block_height].hash)
        t = self.a.tx_id(tx.digest)
        proof = TxTrie(block.transactions, MERKLE_PATRICIA).prove(t.index_in_block)
        return Submission(tx.embedded_packet, t, proof, tx.encode())


def tags(log):
    return [r.tag for r in log]


def test_send_emits_steps_1_to_4_in_order():
    w = World()
    w.send()
    assert tags(w.log) == [Step.SEND, Step.PKT_BUILT, Step.NETWORK_NOTIFY, Step.RELAYER_NOTIFY]
    built = w.log.of(Step.PKT_BUILT)[0]
    assert built.get("bytes") == str(22 + 1)
    assert [m[:2] for m in w.bus.drain()] == [("relayer", "on_notify")]


def test_send_rejections():
    w = World()
    tx = Transaction(1, bytes(20), TxKind.APP_CALL, Packet(Dst(9, ADDR), b""), RelayerArgs(), 1)
    with pytest.raises(UnknownDestinationChain):
        w.ep_a.send(tx, tx.id, Dst(9, ADDR), b"", RelayerArgs())
    big = b"x" * 65
    tx = Transaction(1, bytes(20), TxKind.APP_CALL, Packet(Dst(2, ADDR), big), RelayerArgs(), 2)
    with pytest.raises(PayloadTooLarge):
        w.ep_a.send(tx, tx.id, Dst(2, ADDR), big, RelayerArgs())
    tx = Transaction(1, bytes(20), TxKind.APP_CALL, Packet(Dst(2, ADDR), b"a"), RelayerArgs(), 3)
    with pytest.raises(CouplingError):
        w.ep_a.send(tx, tx.id, Dst(2, ADDR), b"b", RelayerArgs())
    assert w.log.of(Step.SEND) == []
    with pytest.raises(AlreadyRegistered):
        w.ep_a.register_library(1, MERKLE_PATRICIA)


@pytest.mark.parametrize("k", [1, 2, 5, 20])
def test_one_oracle_notification_per_block_and_destination(k):
    w = World()
    for i in range(k):
        w.send(bytes([i]))
    w.send(b"other", dst=1)
    block = w.mine()
    notes = w.log.of(Step.ORACLE_NOTIFY)
    assert sorted(r.dst for r in notes) == [1, 2]
    assert {r.get("hdr") for r in notes} == {block.hash.hex()}
    assert w.ep_a.on_block(block) == 0  # replay of the same block is ignored


def _store(w, block):
    w.ep_b.receive_header(1, block.header)


def test_header_custody():
    w = World()
    w.send()
    block = w.mine()
    _store(w, block)
    assert w.ep_b.stored_headers[(1, 1)] == block.header
    assert [r.get("step") for r in w.log.of(Step.HASH_FWD)] == ["9", "10"]
    _store(w, block)  # identical duplicate is a no-op
    assert len(w.log.of(Step.HDR_STORED)) == 1
    forged = BlockHeader(1, 1, block.header.parent_hash, bytes(32))
    w.ep_b.receive_header(1, forged)
    assert w.ep_b.stored_headers[(1, 1)] == block.header
    assert len(w.log.of(Step.HDR_CONFLICT)) == 1
    bad = replace(block.header, header_hash=bytes(32))
    w.ep_b.receive_header(1, replace(bad, height=2))
    assert w.log.of(Step.REJECTED)[0].get("reason") == "BadHeader"


def _verdicts(w):
    return [r.get("verdict") for r in w.log.of(Step.VERDICT)]


def test_valid_delivery_then_replay():
    w = World()
    got = []
    w.ep_b.register_handler(ADDR, lambda payload, origin: got.append((payload, origin)))
    tx = w.send(b"hello")
    block = w.mine()
    _store(w, block)
    sub = w.submission(tx)
    assert [str(v) for v in w.ep_b.receive_proofs([sub, sub])] == ["Delivered", "Discarded:Replay"]
    assert got == [(b"hello", Origin(1, tx.digest))]
    assert len(w.log.of(Step.DELIVERED)) == 1


def test_substituted_payload_rejected():
    w = World()
    tx = w.send(b"real")
    _store(w, w.mine())
    sub = w.submission(tx)
    fake = replace(sub, packet=Packet(sub.packet.dst, b"fake"))
    assert str(w.ep_b.receive_proofs([fake])[0]) == "Discarded:DigestMismatch"


def test_wrong_destination_and_root_mismatch():
    w = World()
    tx = w.send(b"x")
    block = w.mine()
    w.ep_a.receive_header(1, block.header)
    assert str(w.ep_a.receive_proofs([w.submission(tx)])[0]) == "Discarded:WrongDestination"
    _store(w, block)
    sub = w.submission(tx)
    nodes = list(sub.proof.nodes)
    nodes[-1] = nodes[-1][:-1] + bytes([nodes[-1][-1] ^ 1])
    bad = replace(sub, proof=replace(sub.proof, nodes=tuple(nodes)))
    assert str(w.ep_b.receive_proofs([bad])[0]) == "Discarded:RootMismatch"
    other = w.send(b"y")
    w.mine()
    wrong_block = replace(w.submission(other), t=replace(w.submission(other).t, block_height=1))
    assert str(w.ep_b.receive_proofs([wrong_block])[0]) == "Discarded:RootMismatch"


def test_proof_waits_for_header_then_delivers():
    w = World()
    tx = w.send()
    block = w.mine()
    sub = w.submission(tx)
    assert str(w.ep_b.receive_proofs([sub])[0]) == "Discarded:NoHeader"
    assert w.log.of(Step.VERDICT) == []
    _store(w, block)
    assert _verdicts(w) == ["Delivered"]


def test_proof_without_header_expires():
    w = World()
    tx = w.send()
    w.mine()
    w.ep_b.receive_proofs([w.submission(tx)])
    for tick in range(6):
        w.log.tick = tick
        w.ep_b.step()
    assert _verdicts(w) == ["Discarded:NoHeader"]


def test_undeliverable_without_handler_is_parked():
    w = World()
    tx = w.send()
    _store(w, w.mine())
    w.ep_b.receive_proofs([w.submission(tx)])
    assert w.log.of(Step.PARKED)[0].get("reason") == "NoHandlerRegistered"
    assert w.ep_b.inbox_log[0].handled is False
