"""The per-chain endpoint.

Three stacked sub-modules mirror a network stack: outbound messages go
Communicator -> Validator -> Network, inbound ones climb back up.
Libraries plug in the per-source-chain proof scheme and packet codec.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Callable

from .bus import Bus, endpoint_target
from .chain import Block, BlockHeader, BlockId, Transaction, TxId, decode_transaction
from .events import Step
from .hashing import keccak256
from .packet import DEFAULT_MAX_PAYLOAD, EVM_CODEC, Dst, Packet, PacketCodec, RelayerArgs
from .proofs import ProofScheme, TransactionProof, verify_inclusion

log = logging.getLogger(__name__)

DEFAULT_PROOF_TIMEOUT = 64


class EndpointError(Exception):
    pass


class UnknownDestinationChain(EndpointError):
    pass


class PayloadTooLarge(EndpointError):
    pass


class CouplingError(EndpointError):
    """The application transaction does not embed the packet being sent."""


class AlreadyRegistered(EndpointError):
    pass


class DuplicateHeader(EndpointError):
    pass


class Reason(str, enum.Enum):
    ROOT_MISMATCH = "RootMismatch"
    DIGEST_MISMATCH = "DigestMismatch"
    NO_HEADER = "NoHeader"
    REPLAY = "Replay"
    WRONG_DESTINATION = "WrongDestination"


@dataclass(frozen=True)
class DeliveryVerdict:
    delivered: bool
    reason: Reason | None = None

    def __str__(self) -> str:
        return "Delivered" if self.delivered else f"Discarded:{self.reason.value}"


DELIVERED = DeliveryVerdict(True)


def discarded(reason: Reason) -> DeliveryVerdict:
    return DeliveryVerdict(False, reason)


@dataclass(frozen=True)
class Submission:
    """One Step-11 tuple. ``tx_encoding`` lets the Validator bind the packet to ``t``."""

    packet: Packet
    t: TxId
    proof: TransactionProof
    tx_encoding: bytes


@dataclass(frozen=True)
class Library:
    chain: int
    scheme: ProofScheme
    codec: PacketCodec = EVM_CODEC


@dataclass(frozen=True)
class Origin:
    src_chain: int
    tx_digest: bytes


@dataclass(frozen=True)
class InboxEntry:
    tick: int
    origin: Origin
    packet: Packet
    handled: bool


Handler = Callable[[bytes, Origin], None]


def packet_digest(codec: PacketCodec, packet: Packet) -> bytes:
    return keccak256(codec.encode(packet))


class Communicator:
    def __init__(self, ep: Endpoint):
        self.ep = ep

    def send(self, app_tx: Transaction, t: TxId, dst: Dst, payload: bytes, relayer_args: RelayerArgs) -> Packet:
        ep = self.ep
        if dst.chain not in ep.libraries:
            raise UnknownDestinationChain(f"chain {dst.chain} has no library on endpoint {ep.chain}")
        if len(payload) > ep.max_payload:
            raise PayloadTooLarge(f"{len(payload)} bytes exceeds the {ep.max_payload}-byte limit")
        if app_tx.id.key != t.key or app_tx.embedded_packet != Packet(dst, payload):
            raise CouplingError("send must be issued by the transaction that embeds its packet")
        ep.bus.log.emit(Step.SEND, ep.chain, dst.chain, t.digest, fee=relayer_args.max_fee)
        return self.submit(t, dst, payload, relayer_args)

    def submit(self, t: TxId, dst: Dst, payload: bytes, relayer_args: RelayerArgs) -> Packet:
        ep = self.ep
        packet = Packet(dst, payload)
        codec = ep.libraries[dst.chain].codec
        wire = codec.encode(packet)
        ep.bus.log.emit(Step.PKT_BUILT, ep.chain, dst.chain, t.digest, bytes=len(wire), pkt=keccak256(wire))
        ep.validator.outbound(packet, t, relayer_args)
        return packet

    def emit(self, packet: Packet, t: TxId, header: BlockHeader) -> None:
        ep = self.ep
        handler = ep.handlers.get(packet.dst.address)
        origin = Origin(t.chain, t.digest)
        ep.bus.log.emit(
            Step.DELIVERED,
            t.chain,
            ep.chain,
            t.digest,
            t.block_height,
            hdr=header.header_hash,
            pkt=packet_digest(ep.libraries[t.chain].codec, packet),
        )
        ep.inbox_log.append(InboxEntry(ep.bus.tick, origin, packet, handler is not None))
        if handler is None:
            ep.bus.log.emit(Step.PARKED, t.chain, ep.chain, t.digest, t.block_height, reason="NoHandlerRegistered")
            return
        handler(packet.payload, origin)


class Validator:
    def __init__(self, ep: Endpoint):
        self.ep = ep
        self.waiting: list[tuple[int, Submission]] = []

    def outbound(self, packet: Packet, t: TxId, relayer_args: RelayerArgs) -> None:
        ep = self.ep
        ep.network.on_request(t, packet.dst)  # step 3
        ep.bus.log.emit(Step.RELAYER_NOTIFY, ep.chain, packet.dst.chain, t.digest, fee=relayer_args.max_fee, payee=relayer_args.payee)
        ep.bus.post("relayer", "on_notify", packet, t, relayer_args)  # step 4

    def on_header_hash(self, src: int, blk_hdr_hash: bytes, height: int) -> None:
        ep = self.ep
        ep.bus.log.emit(Step.HASH_FWD, src, ep.chain, None, height, step=10, hdr=blk_hdr_hash)
        ep.bus.post("relayer", "on_header_hash", ep.chain, src, blk_hdr_hash, height)
        ready = [s for _, s in self.waiting if (s.t.chain, s.t.block_height) == (src, height)]
        self.waiting = [(d, s) for d, s in self.waiting if (s.t.chain, s.t.block_height) != (src, height)]
        for sub in ready:
            self.validate(sub)

    def validate(self, sub: Submission) -> DeliveryVerdict:
        ep = self.ep
        t = sub.t
        header = ep.stored_headers.get((t.chain, t.block_height))
        if header is None:
            if not any(s == sub for _, s in self.waiting):
                self.waiting.append((ep.bus.tick + ep.proof_timeout, sub))
            return discarded(Reason.NO_HEADER)
        verdict = self._judge(sub, header)
        self._record(sub, verdict, header)
        return verdict

    def _judge(self, sub: Submission, header: BlockHeader) -> DeliveryVerdict:
        ep, t, proof = self.ep, sub.t, sub.proof
        if sub.packet.dst.chain != ep.chain:
            return discarded(Reason.WRONG_DESTINATION)
        try:
            tx = decode_transaction(sub.tx_encoding)
        except ValueError:
            return discarded(Reason.DIGEST_MISMATCH)
        if tx.digest != t.digest or tx.chain != t.chain or proof.tx_digest != t.digest or tx.embedded_packet != sub.packet:
            return discarded(Reason.DIGEST_MISMATCH)
        library = ep.libraries.get(t.chain)
        if library is None or proof.scheme != library.scheme.tag or not verify_inclusion(header.tx_root, proof):
            return discarded(Reason.ROOT_MISMATCH)
        if t.key in ep.delivered:
            return discarded(Reason.REPLAY)
        return DELIVERED

    def _record(self, sub: Submission, verdict: DeliveryVerdict, header: BlockHeader | None) -> None:
        ep, t = self.ep, sub.t
        ep.bus.log.emit(Step.VERDICT, t.chain, ep.chain, t.digest, t.block_height, verdict=verdict)
        if verdict.delivered:
            ep.delivered[t.key] = ep.bus.tick
            ep.communicator.emit(sub.packet, t, header)

    def expire(self) -> None:
        now = self.ep.bus.tick
        expired = [s for d, s in self.waiting if d <= now]
        self.waiting = [(d, s) for d, s in self.waiting if d > now]
        for sub in expired:
            self._record(sub, discarded(Reason.NO_HEADER), None)


class Network:
    def __init__(self, ep: Endpoint):
        self.ep = ep
        self.pending: dict[bytes, list[int]] = {}
        self.notified: dict[tuple[bytes, int], int] = {}

    def on_request(self, t: TxId, dst: Dst) -> None:
        ep = self.ep
        ep.bus.log.emit(Step.NETWORK_NOTIFY, ep.chain, dst.chain, t.digest)
        targets = self.pending.setdefault(t.digest, [])
        if dst.chain not in targets:
            targets.append(dst.chain)

    def on_block(self, block: Block) -> int:
        """Step 5 for a newly canonical source block; returns notifications sent."""
        sent = 0
        for tx in block.transactions:
            for dst_chain in self.pending.get(tx.digest, ()):
                if self.outbound(dst_chain, block.id):
                    sent += 1
        return sent

    def outbound(self, dst_chain: int, cur_blk_id: BlockId) -> bool:
        key = (cur_blk_id.hash, dst_chain)
        if key in self.notified:
            return False
        ep = self.ep
        self.notified[key] = ep.bus.tick
        ep.bus.log.emit(Step.ORACLE_NOTIFY, cur_blk_id.chain, dst_chain, None, cur_blk_id.height, hdr=cur_blk_id.hash)
        ep.bus.post("oracle", "on_notify", dst_chain, cur_blk_id)
        return True

    def receive_header(self, src: int, hdr: BlockHeader) -> None:
        ep = self.ep
        if src not in ep.libraries or hdr.chain != src or not hdr.is_consistent():
            ep.bus.log.emit(Step.REJECTED, src, ep.chain, None, hdr.height, reason="BadHeader", hdr=hdr.header_hash)
            return
        key = (src, hdr.height)
        existing = ep.stored_headers.get(key)
        if existing is not None:
            if existing.header_hash == hdr.header_hash:
                return
            ep.bus.log.emit(Step.HDR_CONFLICT, src, ep.chain, None, hdr.height, kept=existing.header_hash, rejected=hdr.header_hash)
            raise DuplicateHeader(f"conflicting header for chain {src} height {hdr.height}")
        ep.stored_headers[key] = hdr
        ep.bus.log.emit(Step.HDR_STORED, src, ep.chain, None, hdr.height, hdr=hdr.header_hash)
        ep.bus.log.emit(Step.HASH_FWD, src, ep.chain, None, hdr.height, step=9, hdr=hdr.header_hash)
        ep.validator.on_header_hash(src, hdr.header_hash, hdr.height)


class Endpoint:
    def __init__(self, chain: int, bus: Bus, max_payload: int = DEFAULT_MAX_PAYLOAD, proof_timeout: int = DEFAULT_PROOF_TIMEOUT):
        self.chain = chain
        self.bus = bus
        self.max_payload = max_payload
        self.proof_timeout = proof_timeout
        self.libraries: dict[int, Library] = {}
        self.handlers: dict[bytes, Handler] = {}
        self.stored_headers: dict[tuple[int, int], BlockHeader] = {}
        self.delivered: dict[tuple[int, bytes], int] = {}
        self.inbox_log: list[InboxEntry] = []
        self.communicator = Communicator(self)
        self.validator = Validator(self)
        self.network = Network(self)

    @property
    def target(self) -> str:
        return endpoint_target(self.chain)

    def register_library(self, chain: int, scheme: ProofScheme, codec: PacketCodec = EVM_CODEC) -> None:
        if chain in self.libraries:
            raise AlreadyRegistered(f"chain {chain} already has a library on endpoint {self.chain}")
        self.libraries[chain] = Library(chain, scheme, codec)

    def register_handler(self, address: bytes, handler: Handler) -> None:
        self.handlers[bytes(address)] = handler

    # -- application-facing -----------------------------------------------------

    def send(self, app_tx: Transaction, t: TxId, dst: Dst, payload: bytes, relayer_args: RelayerArgs) -> Packet:
        return self.communicator.send(app_tx, t, dst, payload, relayer_args)

    # -- chain and scheduler hooks ------------------------------------------------

    def on_block(self, block: Block) -> int:
        return self.network.on_block(block)

    def receive_header(self, src: int, hdr: BlockHeader) -> None:
        try:
            self.network.receive_header(src, hdr)
        except DuplicateHeader as exc:
            log.info("%s", exc)

    def receive_proofs(self, submissions: list[Submission]) -> list[DeliveryVerdict]:
        return [self.validator.validate(s) for s in submissions]

    def step(self) -> None:
        self.validator.expire()
