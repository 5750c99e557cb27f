import random

import pytest

from omnirelay.agents import (
    CollusionDisabled,
    ForgeProofMode,
    IndependencePolicy,
    OracleAgent,
    OracleBehavior,
    RelayerAgent,
    RelayerBehavior,
    forge_colluding_pair,
    forged_transaction,
)
from omnirelay.bus import Bus
from omnirelay.chain import BlockId, ChainState, Transaction, TxKind
from omnirelay.events import Step
from omnirelay.packet import Dst, Packet, RelayerArgs
from omnirelay.proofs import verify_inclusion

DST = Dst(2, b"\x22" * 20)


def setup(depth=3, **relayer_kw):
    bus = Bus()
    chains = {1: ChainState(1, depth), 2: ChainState(2, depth)}
    oracle = OracleAgent(bus, chains, rng=random.Random(1))
    relayer = RelayerAgent(bus, chains, rng=random.Random(2), **relayer_kw)
    return bus, chains, oracle, relayer


def app_tx(nonce=1, fee=0):
    return Transaction(1, bytes(20), TxKind.APP_CALL, Packet(DST, b"m"), RelayerArgs(bytes(20), fee), nonce)


def test_independence_policy():
    IndependencePolicy(False).check(OracleBehavior.FORGE, RelayerBehavior.FORGE)
    with pytest.raises(CollusionDisabled):
        IndependencePolicy(False).check(OracleBehavior.COLLUDING, RelayerBehavior.HONEST)
    IndependencePolicy(True).check(OracleBehavior.COLLUDING, RelayerBehavior.COLLUDING)


def test_colluding_pair_matches_only_itself():
    fake = forged_transaction(1, DST, b"evil", nonce=5)
    with pytest.raises(CollusionDisabled):
        forge_colluding_pair(fake, DST, b"evil", policy=IndependencePolicy(False), height=3)
    header, proof = forge_colluding_pair(fake, DST, b"evil", policy=IndependencePolicy(True), height=3)
    assert header.is_consistent() and verify_inclusion(header.tx_root, proof)
    assert proof.tx_digest == fake.digest
    with pytest.raises(ValueError):
        forge_colluding_pair(fake, DST, b"other", policy=IndependencePolicy(True), height=3)


def test_oracle_waits_for_confirmations():
    bus, chains, oracle, _ = setup(depth=3)
    chains[1].mine_block()
    blk = chains[1].block_at(1)
    oracle.on_notify(2, blk.id)
    assert bus.log.of(Step.HDR_READ)[0].get("forged") == "0"
    for expected_posts in (0, 0, 1):
        bus.drain()
        assert len(oracle.maybe_deliver()) == expected_posts
        chains[1].mine_block()
    assert chains[1].block_confirmations(blk.hash) >= 3


def test_oracle_retires_reorged_blocks():
    bus, chains, oracle, _ = setup(depth=3)
    chains[1].mine_block()
    blk = chains[1].block_at(1)
    oracle.on_notify(2, blk.id)
    chains[1].inject_reorg(1, chains[1].build_branch(1, [[app_tx()], []]))
    assert oracle.maybe_deliver() == []
    assert bus.log.of(Step.RETIRED)[0].get("reason") == "ReorgedOut"
    oracle.on_notify(2, BlockId(1, 1, blk.hash))
    assert len(bus.log.of(Step.RETIRED)) == 2


def test_forging_oracle_substitutes_tx_root():
    bus, chains, _, _ = setup()
    oracle = OracleAgent(bus, chains, OracleBehavior.FORGE, random.Random(3))
    chains[1].mine_block()
    oracle.on_notify(2, chains[1].block_at(1).id)
    entry = next(iter(oracle.watched.values()))
    assert entry.forged and entry.header.tx_root != chains[1].read_header(1).tx_root


def test_relayer_fee_floor_and_withhold():
    bus, chains, _, relayer = setup(min_fee=5)
    tx = app_tx(fee=4)
    relayer.on_notify(tx.embedded_packet, tx.id, tx.relayer_args)
    assert bus.log.of(Step.REFUSED)[0].get("reason") == "FeeTooLow"
    withholder = RelayerAgent(bus, chains, RelayerBehavior.WITHHOLD, withhold=[tx.digest])
    withholder.on_notify(tx.embedded_packet, tx.id, RelayerArgs(bytes(20), 100))
    assert bus.log.of(Step.REFUSED)[1].get("reason") == "Withheld"
    assert relayer.pending == {} and withholder.pending == {}


def _relay_one(relayer, chains, bus, depth):
    tx = app_tx()
    t = chains[1].submit_transaction(tx)
    relayer.on_notify(tx.embedded_packet, t, tx.relayer_args)
    chains[1].mine_block()
    relayer.step()
    blk = chains[1].block_at(1)
    subs = relayer.on_header_hash(2, 1, blk.hash, 1)
    return tx, blk, subs


def test_relayer_defers_until_confirmed_then_batches():
    bus, chains, _, relayer = setup(depth=3)
    tx, blk, subs = _relay_one(relayer, chains, bus, 3)
    assert subs == [] and bus.log.of(Step.PROOF_READ)
    chains[1].mine_block()
    chains[1].mine_block()
    relayer.step()
    sub = bus.log.of(Step.PROOFS_SUBMITTED)[0]
    assert sub.get("k") == "1" and sub.get("txs") == tx.digest.hex()


@pytest.mark.parametrize("mode", [m for m in ForgeProofMode if m is not ForgeProofMode.MIXED])
def test_forging_relayer_output_never_verifies_as_new_tx(mode):
    bus, chains, _, _ = setup(depth=1)
    relayer = RelayerAgent(bus, chains, RelayerBehavior.FORGE, random.Random(7), forge_mode=mode)
    tx, blk, subs = _relay_one(relayer, chains, bus, 1)
    assert subs
    for s in subs:
        honest = s.packet == tx.embedded_packet and s.t.digest == tx.digest
        valid = verify_inclusion(blk.header.tx_root, s.proof) and s.t.index_in_block == 0
        if mode is ForgeProofMode.REPLAY:
            assert honest and valid
        else:
            assert not (honest and valid)
