"""Off-chain Oracle and Relayer actors, honest and adversarial.

Agents are deterministic: all randomness comes from the ``random.Random``
handed in by the harness. They read chain state directly (the view is fixed
for the duration of a tick) and talk to endpoints only through the bus.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, replace
from typing import Iterable, Mapping

from .bus import Bus, endpoint_target
from .chain import BlockHeader, BlockId, ChainState, Transaction, TxId, TxKind, make_block
from .endpoint import Submission
from .events import Step
from .hashing import ZERO_HASH
from .packet import Dst, Packet, RelayerArgs
from .proofs import MERKLE_PATRICIA, ProofScheme, TransactionProof, TxTrie

RELAYER_RETRY_LIMIT = 1024
COLLUSION_PATIENCE = 4


class CollusionDisabled(Exception):
    pass


class OracleBehavior(str, enum.Enum):
    HONEST = "honest"
    FORGE = "forge"  # queue a header with a fabricated tx_root
    PREMATURE = "premature"  # forward true headers without waiting for confirmations
    COLLUDING = "colluding"


class RelayerBehavior(str, enum.Enum):
    HONEST = "honest"
    FORGE = "forge"
    WITHHOLD = "withhold"
    COLLUDING = "colluding"


class ForgeProofMode(str, enum.Enum):
    MUTATE = "mutate"  # flip one byte of one proof node
    FABRICATE = "fabricate"  # prove against a block that never existed
    SUBSTITUTE = "substitute"  # swap the packet payload
    REPLAY = "replay"  # submit every tuple twice
    MIXED = "mixed"


@dataclass(frozen=True)
class IndependencePolicy:
    collusion_allowed: bool = False

    def check(self, oracle: OracleBehavior, relayer: RelayerBehavior) -> None:
        if not self.collusion_allowed and (oracle is OracleBehavior.COLLUDING or relayer is RelayerBehavior.COLLUDING):
            raise CollusionDisabled("colluding agents require collusion_allowed = true")


def forge_colluding_pair(
    fake_tx: Transaction,
    dst: Dst,
    payload: bytes,
    *,
    policy: IndependencePolicy,
    height: int,
    parent_hash: bytes = ZERO_HASH,
    scheme: ProofScheme = MERKLE_PATRICIA,
) -> tuple[BlockHeader, TransactionProof]:
    """Header and proof for a single-transaction block that was never mined.

    The two artefacts match each other and nothing else: an endpoint that
    receives both from a colluding Oracle and Relayer accepts ``fake_tx``.
    """
    if not policy.collusion_allowed:
        raise CollusionDisabled("forging a matching header/proof pair needs collusion_allowed = true")
    if fake_tx.embedded_packet != Packet(dst, payload):
        raise ValueError("fake transaction must embed the forged packet")
    block = make_block(fake_tx.chain, height, parent_hash, [fake_tx], scheme)
    return block.header, TxTrie(block.transactions, scheme).prove(0)


@dataclass
class WatchEntry:
    dst: int
    block: BlockId
    header: BlockHeader
    forged: bool = False


class OracleAgent:
    def __init__(
        self,
        bus: Bus,
        chains: Mapping[int, ChainState],
        behavior: OracleBehavior = OracleBehavior.HONEST,
        rng: random.Random | None = None,
        policy: Mapping[int, int] | None = None,
        forge_rate: float = 1.0,
    ):
        self.bus = bus
        self.chains = chains
        self.behavior = OracleBehavior(behavior)
        self.rng = rng or random.Random(0)
        self.policy = dict(policy) if policy is not None else {c: s.confirmation_depth for c, s in chains.items()}
        self.forge_rate = forge_rate
        self.watched: dict[tuple[int, bytes, int], WatchEntry] = {}
        self.colluding_headers: list[tuple[int, BlockHeader]] = []

    def on_notify(self, dst_chain: int, cur_blk_id: BlockId) -> None:
        key = (cur_blk_id.chain, cur_blk_id.hash, dst_chain)
        if key in self.watched:
            return
        chain = self.chains[cur_blk_id.chain]
        log = self.bus.log
        if not chain.is_canonical(cur_blk_id.hash):
            log.emit(Step.RETIRED, cur_blk_id.chain, dst_chain, None, cur_blk_id.height, hdr=cur_blk_id.hash, reason="ReorgedOut")
            return
        header = chain.read_header(cur_blk_id.height)
        forged = self.behavior is OracleBehavior.FORGE and self.rng.random() < self.forge_rate
        if forged:
            header = BlockHeader(header.chain, header.height, header.parent_hash, self.rng.randbytes(32))
        log.emit(Step.HDR_READ, cur_blk_id.chain, dst_chain, None, cur_blk_id.height, hdr=header.header_hash, forged=int(forged))
        self.watched[key] = WatchEntry(dst_chain, cur_blk_id, header, forged)

    def maybe_deliver(self) -> list[tuple[int, BlockHeader]]:
        out = []
        for key, entry in list(self.watched.items()):
            src = entry.block.chain
            chain = self.chains[src]
            if not chain.is_canonical(entry.block.hash):
                self.bus.log.emit(Step.RETIRED, src, entry.dst, None, entry.block.height, hdr=entry.block.hash, reason="ReorgedOut")
                del self.watched[key]
                continue
            if self.behavior is not OracleBehavior.PREMATURE and chain.block_confirmations(entry.block.hash) < self.policy[src]:
                continue
            del self.watched[key]
            out.append((entry.dst, entry.header))
        out.extend(self.colluding_headers)
        self.colluding_headers = []
        for dst, header in out:
            self.bus.post(endpoint_target(dst), "receive_header", header.chain, header)
        return out

    def inject_forged(self, dst_chain: int, header: BlockHeader) -> None:
        if self.behavior is OracleBehavior.COLLUDING:
            self.colluding_headers.append((dst_chain, header))

    def step(self) -> None:
        self.maybe_deliver()


@dataclass
class PendingMessage:
    packet: Packet
    t: TxId
    relayer_args: RelayerArgs
    since: int


@dataclass
class Prefetched:
    packet: Packet
    t: TxId
    proof: TransactionProof
    block_hash: bytes


@dataclass
class Announcement:
    dst: int
    src: int
    blk_hdr_hash: bytes
    height: int


@dataclass
class ColludingSubmission:
    dst: int
    blk_hdr_hash: bytes
    submission: Submission
    since: int


class RelayerAgent:
    def __init__(
        self,
        bus: Bus,
        chains: Mapping[int, ChainState],
        behavior: RelayerBehavior = RelayerBehavior.HONEST,
        rng: random.Random | None = None,
        min_fee: int = 0,
        forge_mode: ForgeProofMode = ForgeProofMode.MUTATE,
        forge_rate: float = 1.0,
        withhold: Iterable[bytes] = (),
        withhold_rate: float = 0.0,
        retry_limit: int = RELAYER_RETRY_LIMIT,
    ):
        self.bus = bus
        self.chains = chains
        self.behavior = RelayerBehavior(behavior)
        self.rng = rng or random.Random(0)
        self.min_fee = min_fee
        self.forge_mode = ForgeProofMode(forge_mode)
        self.forge_rate = forge_rate
        self.withhold: dict[bytes, None] = dict.fromkeys(withhold)
        self.withhold_rate = withhold_rate
        self.retry_limit = retry_limit
        self.pending: dict[bytes, PendingMessage] = {}
        self.prefetched: dict[bytes, Prefetched] = {}
        self.announced: list[Announcement] = []
        self.colluding: list[ColludingSubmission] = []

    # -- step 4 receipt / step 7 ------------------------------------------------

    def on_notify(self, packet: Packet, t: TxId, relayer_args: RelayerArgs) -> None:
        log = self.bus.log
        if relayer_args.max_fee < self.min_fee:
            log.emit(Step.REFUSED, t.chain, packet.dst.chain, t.digest, reason="FeeTooLow", fee=relayer_args.max_fee)
            return
        if self.behavior is RelayerBehavior.WITHHOLD and (t.digest in self.withhold or self.rng.random() < self.withhold_rate):
            log.emit(Step.REFUSED, t.chain, packet.dst.chain, t.digest, reason="Withheld")
            return
        self.pending[t.digest] = PendingMessage(packet, t, relayer_args, self.bus.tick)

    def prefetch(self, digest: bytes) -> Prefetched | None:
        """Read ``proof(t)`` from the canonical source chain; ``None`` while unmined."""
        msg = self.pending[digest]
        chain = self.chains[msg.t.chain]
        located = chain.tx_id(digest)
        if located is None:
            return None
        block = chain.block_at(located.block_height)
        proof = TxTrie(block.transactions, chain.scheme).prove(located.index_in_block)
        self.bus.log.emit(Step.PROOF_READ, msg.t.chain, msg.packet.dst.chain, digest, located.block_height, hdr=block.hash)
        pf = Prefetched(msg.packet, located, proof, block.hash)
        self.prefetched[digest] = pf
        return pf

    def step(self) -> None:
        now = self.bus.tick
        for digest, msg in list(self.pending.items()):
            if digest in self.prefetched:
                continue
            if self.prefetch(digest) is None and now - msg.since >= self.retry_limit:
                self.bus.log.emit(Step.EXPIRED, msg.t.chain, msg.packet.dst.chain, digest, reason="ProofUnavailable")
                del self.pending[digest]
        for ann in list(self.announced):
            self._try_submit(ann)
        for cs in list(self.colluding):
            if now - cs.since >= COLLUSION_PATIENCE:
                self._submit_colluding(cs)

    # -- step 10 receipt / step 11 ----------------------------------------------

    def on_header_hash(self, dst: int, src: int, blk_hdr_hash: bytes, height: int) -> list[Submission]:
        for cs in list(self.colluding):
            if cs.blk_hdr_hash == blk_hdr_hash and cs.dst == dst:
                return self._submit_colluding(cs)
        ann = Announcement(dst, src, blk_hdr_hash, height)
        self.announced.append(ann)
        return self._try_submit(ann)

    def _try_submit(self, ann: Announcement) -> list[Submission]:
        chain = self.chains[ann.src]
        if not chain.is_canonical(ann.blk_hdr_hash):
            # forged, or reorged out: nothing on the real chain can match it
            self.announced.remove(ann)
            return []
        if chain.block_confirmations(ann.blk_hdr_hash) < chain.confirmation_depth:
            return []
        self.announced.remove(ann)
        block = chain.block_by_hash(ann.blk_hdr_hash)
        subs = []
        for tx in block.transactions:
            msg = self.pending.get(tx.digest)
            if msg is None or msg.packet.dst.chain != ann.dst:
                continue
            pf = self.prefetched.get(tx.digest)
            if pf is None or pf.block_hash != ann.blk_hdr_hash:
                pf = self.prefetch(tx.digest)
            subs.append(Submission(pf.packet, pf.t, pf.proof, tx.encode()))
            del self.pending[tx.digest]
            self.prefetched.pop(tx.digest, None)
        if self.behavior is RelayerBehavior.FORGE:
            subs = self._tamper(subs)
        self._post(ann.dst, ann.src, ann.height, ann.blk_hdr_hash, subs)
        return subs

    def _post(self, dst: int, src: int, height: int, blk_hdr_hash: bytes, subs: list[Submission]) -> None:
        if not subs:
            return
        txs = ",".join(s.t.digest.hex() for s in subs)
        self.bus.log.emit(Step.PROOFS_SUBMITTED, src, dst, None, height, hdr=blk_hdr_hash, k=len(subs), txs=txs)
        self.bus.post(endpoint_target(dst), "receive_proofs", subs)

    # -- adversarial paths --------------------------------------------------------

    def _tamper(self, subs: list[Submission]) -> list[Submission]:
        out = []
        for sub in subs:
            if self.rng.random() >= self.forge_rate:
                out.append(sub)
                continue
            mode = self.forge_mode
            if mode is ForgeProofMode.MIXED:
                mode = self.rng.choice([m for m in ForgeProofMode if m is not ForgeProofMode.MIXED])
            if mode is ForgeProofMode.REPLAY:
                out.extend([sub, sub])
            elif mode is ForgeProofMode.SUBSTITUTE:
                fake = Packet(sub.packet.dst, self.rng.randbytes(len(sub.packet.payload) + 1))
                out.append(replace(sub, packet=fake))
            elif mode is ForgeProofMode.FABRICATE:
                filler = [self.rng.randbytes(32) for _ in range(self.rng.randrange(1, 4))]
                proof = TxTrie([sub.t.digest, *filler], self.chains[sub.t.chain].scheme).prove(0)
                out.append(replace(sub, t=replace(sub.t, index_in_block=0), proof=proof))
            else:
                out.append(replace(sub, proof=_flip_byte(sub.proof, self.rng)))
        return out

    def inject_forged(self, dst: int, header: BlockHeader, submission: Submission) -> None:
        if self.behavior is RelayerBehavior.COLLUDING:
            self.colluding.append(ColludingSubmission(dst, header.header_hash, submission, self.bus.tick))

    def _submit_colluding(self, cs: ColludingSubmission) -> list[Submission]:
        self.colluding.remove(cs)
        self._post(cs.dst, cs.submission.t.chain, cs.submission.t.block_height, cs.blk_hdr_hash, [cs.submission])
        return [cs.submission]


def _flip_byte(proof: TransactionProof, rng: random.Random) -> TransactionProof:
    nodes = list(proof.nodes)
    i = rng.randrange(len(nodes))
    raw = bytearray(nodes[i])
    j = rng.randrange(len(raw))
    raw[j] ^= 1 << rng.randrange(8)
    nodes[i] = bytes(raw)
    return replace(proof, nodes=tuple(nodes))


def forged_transaction(src: int, dst: Dst, payload: bytes, nonce: int, sender: bytes = bytes(20)) -> Transaction:
    return Transaction(src, sender, TxKind.APP_CALL, Packet(dst, payload), RelayerArgs(), nonce)
