"""Post-run audit of an event log against the simulator's ground truth.

The auditor trusts nothing the actors logged about validity. It rebuilds the
canonical chain each source chain had at every tick from the recorded head
hashes and checks every delivery against that.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

from .bridge import BridgePayload, MalformedPayload
from .chain import ChainState, TxKind
from .events import EventLog, EventRecord, Step
from .hashing import keccak256
from .packet import encode_packet
from .harness import GroundTruth

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_UNSOUND = 2


@dataclass(frozen=True)
class Violation:
    tick: int
    src: int
    dst: int
    tx: bytes
    reason: str

    def __str__(self) -> str:
        return f"tick={self.tick} src={self.src} dst={self.dst} tx={self.tx.hex()} reason={self.reason}"


@dataclass(frozen=True)
class LivenessMiss:
    label: str
    src: int
    dst: int
    tx: bytes
    reason: str

    def __str__(self) -> str:
        return f"{self.label} src={self.src} dst={self.dst} tx={self.tx.hex()} reason={self.reason}"


@dataclass
class AuditReport:
    scenario: str
    honest: bool
    sends: int = 0
    delivered: int = 0
    discarded: dict[str, int] = field(default_factory=dict)
    soundness_violations: list[Violation] = field(default_factory=list)
    liveness_misses: list[LivenessMiss] = field(default_factory=list)
    gate_violations: list[str] = field(default_factory=list)
    forged_headers_stored: int = 0
    ordering_violations: list[str] = field(default_factory=list)
    headers_stored: int = 0
    message_blocks: int = 0
    header_storage_ratio: Fraction = Fraction(0)
    proofs_submitted: int = 0
    bridge_locked: int = 0
    bridge_minted: int = 0
    bridge_locked_canonical: int = 0
    unbacked_mints: list[str] = field(default_factory=list)

    @property
    def sound(self) -> bool:
        return not self.soundness_violations

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.sound else EXIT_UNSOUND

    @property
    def bridge_conserved(self) -> bool:
        return not self.unbacked_mints and self.bridge_minted <= self.bridge_locked_canonical

    def counters(self) -> dict:
        return {
            "sends": self.sends,
            "delivered": self.delivered,
            "discarded": dict(sorted(self.discarded.items())),
            "soundness_violations": len(self.soundness_violations),
            "liveness_misses": len(self.liveness_misses),
            "gate_violations": len(self.gate_violations),
            "forged_headers_stored": self.forged_headers_stored,
            "ordering_violations": len(self.ordering_violations),
            "headers_stored": self.headers_stored,
            "message_blocks": self.message_blocks,
            "header_storage_ratio": str(self.header_storage_ratio),
            "proofs_submitted": self.proofs_submitted,
            "bridge_locked": self.bridge_locked,
            "bridge_locked_canonical": self.bridge_locked_canonical,
            "bridge_minted": self.bridge_minted,
            "unbacked_mints": len(self.unbacked_mints),
            "exit_code": self.exit_code,
        }

    def to_text(self) -> str:
        lines = [
            f"scenario: {self.scenario}",
            f"agents: {'honest' if self.honest else 'adversarial'}",
            f"sound: {'yes' if self.sound else 'NO'}",
            f"sends: {self.sends}  delivered: {self.delivered}",
            f"header storage ratio: {self.header_storage_ratio} ({self.headers_stored}/{self.message_blocks})",
        ]
        sections = [
            ("soundness violations", self.soundness_violations),
            ("gate violations", self.gate_violations),
            ("ordering violations", self.ordering_violations),
            ("liveness misses", self.liveness_misses),
            ("unbacked mints", self.unbacked_mints),
        ]
        for title, items in sections:
            if items:
                lines.append(f"{title}:")
                lines.extend(f"  {item}" for item in items)
        if self.discarded:
            lines.append("discarded: " + ", ".join(f"{k}={v}" for k, v in sorted(self.discarded.items())))
        lines.append("counters=" + json.dumps(self.counters(), sort_keys=True))
        return "\n".join(lines) + "\n"


class CanonicalView:
    """Canonical chain of one source chain as it stood at each tick."""

    def __init__(self, chain: ChainState, heads: list[bytes]):
        self.chain = chain
        self.heads = heads
        self._cache: dict[bytes, tuple[int, dict[bytes, int], dict[bytes, int]]] = {}

    def at(self, tick: int) -> tuple[int, dict[bytes, int], dict[bytes, int]]:
        """``(head_height, block_hash -> height, tx_digest -> height)`` at ``tick``."""
        head = self.heads[min(tick, len(self.heads) - 1)]
        if head not in self._cache:
            blocks: dict[bytes, int] = {}
            txs: dict[bytes, int] = {}
            block = self.chain.block_by_hash(head)
            head_height = block.height
            while block is not None:
                blocks[block.hash] = block.height
                for tx in block.transactions:
                    txs[tx.digest] = block.height
                block = self.chain.block_by_hash(block.header.parent_hash) if block.height > 0 else None
            self._cache[head] = (head_height, blocks, txs)
        return self._cache[head]

    def confirmations(self, tick: int, height: int) -> int:
        return self.at(tick)[0] - height + 1


def audit(log: EventLog, truth: GroundTruth, scenario: str = "") -> AuditReport:
    report = AuditReport(scenario, truth.honest)
    views = {cid: CanonicalView(chain, truth.head_history[cid]) for cid, chain in truth.chains.items()}
    sends = log.of(Step.SEND)
    report.sends = len(sends)
    delivered = log.of(Step.DELIVERED)
    report.delivered = len(delivered)

    _check_soundness(report, delivered, truth, views)
    _check_gate(report, log, truth, views)
    _check_liveness(report, log, truth, sends, delivered)
    _check_ordering(report, log, sends, delivered)

    verdicts = Counter(r.get("verdict") for r in log.of(Step.VERDICT))
    report.discarded = {k: v for k, v in verdicts.items() if k and k != "Delivered"}
    report.headers_stored = len(log.of(Step.HDR_STORED))
    report.message_blocks = len({(r.src, r.get("hdr"), r.dst) for r in log.of(Step.ORACLE_NOTIFY)})
    report.header_storage_ratio = Fraction(report.headers_stored, report.message_blocks) if report.message_blocks else Fraction(0)
    report.proofs_submitted = sum(int(r.get("k", "0")) for r in log.of(Step.PROOFS_SUBMITTED))
    _check_bridge(report, truth)
    return report


def _check_soundness(report: AuditReport, delivered: list[EventRecord], truth: GroundTruth, views: dict[int, CanonicalView]) -> None:
    seen: dict[tuple[int, int, bytes], int] = {}
    for r in delivered:
        reason = None
        chain = truth.chains.get(r.src)
        tx = chain.transaction(r.tx) if chain is not None else None
        if tx is None:
            reason = "UncommittedTransaction"
        else:
            _, _, txs = views[r.src].at(r.tick)
            if r.tx not in txs:
                reason = "NotCanonical"
            elif views[r.src].confirmations(r.tick, txs[r.tx]) < chain.confirmation_depth:
                reason = "InsufficientConfirmations"
            elif tx.kind is not TxKind.APP_CALL or tx.embedded_packet is None:
                reason = "NoEmbeddedPacket"
            elif keccak256(encode_packet(tx.embedded_packet)).hex() != r.get("pkt"):
                reason = "PacketNotBound"
            elif tx.embedded_packet.dst.chain != r.dst:
                reason = "WrongDestination"
        key = (r.dst, r.src, r.tx)
        if reason is None and key in seen:
            reason = "DuplicateDelivery"
        seen[key] = r.tick
        if reason is not None:
            report.soundness_violations.append(Violation(r.tick, r.src, r.dst, r.tx, reason))


def _check_gate(report: AuditReport, log: EventLog, truth: GroundTruth, views: dict[int, CanonicalView]) -> None:
    for r in log.of(Step.HDR_STORED):
        chain = truth.chains.get(r.src)
        hdr = bytes.fromhex(r.get("hdr"))
        if chain is None or chain.block_by_hash(hdr) is None:
            report.forged_headers_stored += 1
            continue
        _, blocks, _ = views[r.src].at(r.tick)
        if hdr not in blocks:
            report.gate_violations.append(f"tick={r.tick} src={r.src} dst={r.dst} height={r.height} stored a non-canonical header")
        elif views[r.src].confirmations(r.tick, blocks[hdr]) < chain.confirmation_depth:
            conf = views[r.src].confirmations(r.tick, blocks[hdr])
            report.gate_violations.append(f"tick={r.tick} src={r.src} dst={r.dst} height={r.height} stored with {conf} confirmations")


def _check_liveness(report: AuditReport, log: EventLog, truth: GroundTruth, sends: list[EventRecord], delivered: list[EventRecord]) -> None:
    done = {(r.src, r.tx) for r in delivered}
    notes: dict[bytes, str] = {}
    for r in log.of(Step.REFUSED, Step.EXPIRED, Step.VERDICT):
        if r.tag is Step.VERDICT:
            if r.get("verdict") != "Delivered":
                notes.setdefault(r.tx, r.get("verdict"))
        else:
            notes[r.tx] = r.get("reason")
    labels = {m.digest: m.label for m in truth.messages}
    for r in sends:
        if (r.src, r.tx) in done:
            continue
        chain = truth.chains[r.src]
        located = chain.tx_id(r.tx)
        if r.tx in notes:
            reason = notes[r.tx]
        elif located is None:
            evicted = any(tx.digest == r.tx for tx in chain.evicted)
            reason = "ReorgedOut" if evicted else "NotMined"
        elif chain.block_confirmations(chain.block_at(located.block_height).hash) < chain.confirmation_depth:
            reason = "Unconfirmed"
        elif _stored_mismatch(truth, r.src, r.dst, chain.block_at(located.block_height)):
            reason = "HeaderMismatch"
        else:
            reason = "Undelivered"
        report.liveness_misses.append(LivenessMiss(labels.get(r.tx, "?"), r.src, r.dst, r.tx, reason))


def _stored_mismatch(truth: GroundTruth, src: int, dst: int, block) -> bool:
    ep = truth.endpoints.get(dst)
    stored = ep.stored_headers.get((src, block.height)) if ep is not None else None
    return stored is not None and stored.header_hash != block.hash


def _first(index: dict, key, after: int = -1, before: int | None = None) -> EventRecord | None:
    for rec in index.get(key, ()):
        if rec.seq > after and (before is None or rec.seq < before):
            return rec
    return None


def _check_ordering(report: AuditReport, log: EventLog, sends: list[EventRecord], delivered: list[EventRecord]) -> None:
    by_tx: dict[tuple[Step, bytes], list[EventRecord]] = {}
    by_block: dict[tuple, list[EventRecord]] = {}
    submitted: dict[bytes, list[EventRecord]] = {}
    for r in log:
        if r.tx is not None:
            by_tx.setdefault((r.tag, r.tx), []).append(r)
        if r.tag in (Step.ORACLE_NOTIFY, Step.HDR_READ, Step.HDR_STORED, Step.HASH_FWD):
            by_block.setdefault((r.tag, r.get("step"), r.src, r.dst, r.get("hdr")), []).append(r)
        if r.tag is Step.PROOFS_SUBMITTED:
            for d in r.get("txs", "").split(","):
                if d:
                    submitted.setdefault(bytes.fromhex(d), []).append(r)
    sent = {r.tx for r in sends}
    for d in delivered:
        if d.tx not in sent:
            continue
        problems = _order_one(d, by_tx, by_block, submitted)
        report.ordering_violations.extend(f"tx={d.tx.hex()}: {p}" for p in problems)


def _order_one(d: EventRecord, by_tx, by_block, submitted) -> list[str]:
    hdr = d.get("hdr")
    problems: list[str] = []
    chain: list[tuple[str, EventRecord | None]] = []

    def need(name: str, rec: EventRecord | None) -> EventRecord | None:
        if rec is None:
            problems.append(f"missing {name}")
        chain.append((name, rec))
        return rec

    need("SEND", _first(by_tx, (Step.SEND, d.tx)))
    built = need("PKT_BUILT", _first(by_tx, (Step.PKT_BUILT, d.tx)))
    net = need("NETWORK_NOTIFY", _first(by_tx, (Step.NETWORK_NOTIFY, d.tx)))
    rel = _first(by_tx, (Step.RELAYER_NOTIFY, d.tx))
    if rel is None:
        problems.append("missing RELAYER_NOTIFY")
    elif net is not None and rel.tick != net.tick:
        problems.append("RELAYER_NOTIFY not in the same tick as NETWORK_NOTIFY")
    need("ORACLE_NOTIFY", _first(by_block, (Step.ORACLE_NOTIFY, None, d.src, d.dst, hdr)))
    need("HDR_READ", _first(by_block, (Step.HDR_READ, None, d.src, d.dst, hdr)))
    need("HDR_STORED", _first(by_block, (Step.HDR_STORED, None, d.src, d.dst, hdr)))
    need("HASH_FWD step 9", _first(by_block, (Step.HASH_FWD, "9", d.src, d.dst, hdr)))
    fwd10 = need("HASH_FWD step 10", _first(by_block, (Step.HASH_FWD, "10", d.src, d.dst, hdr)))
    subs = [r for r in submitted.get(d.tx, ()) if r.get("hdr") == hdr and r.dst == d.dst and r.seq < d.seq]
    sub = need("PROOFS_SUBMITTED", subs[-1] if subs else None)
    verdicts = [r for r in by_tx.get((Step.VERDICT, d.tx), ()) if r.get("verdict") == "Delivered" and r.seq < d.seq]
    need("VERDICT Delivered", verdicts[-1] if verdicts else None)
    chain.append(("DELIVERED", d))

    present = [(n, r) for n, r in chain if r is not None]
    for (na, a), (nb, b) in zip(present, present[1:]):
        if a.seq >= b.seq:
            problems.append(f"{na} (seq {a.seq}) not before {nb} (seq {b.seq})")
    if rel is not None and built is not None and rel.seq <= built.seq:
        problems.append("RELAYER_NOTIFY before PKT_BUILT")
    if sub is not None:
        reads = [r for r in by_tx.get((Step.PROOF_READ, d.tx), ()) if r.get("hdr") == hdr and r.seq < sub.seq]
        if not reads:
            problems.append("missing PROOF_READ before PROOFS_SUBMITTED")
        elif rel is not None and reads[-1].seq <= rel.seq:
            problems.append("PROOF_READ not after RELAYER_NOTIFY")
        if fwd10 is not None and fwd10.seq >= sub.seq:
            problems.append("PROOFS_SUBMITTED before HASH_FWD step 10")
    return problems


def _check_bridge(report: AuditReport, truth: GroundTruth) -> None:
    addr = truth.bridge_address
    locked: dict[tuple[int, int], int] = {}
    for src, chain in truth.chains.items():
        for block in chain.canonical:
            for tx in block.transactions:
                pkt = tx.embedded_packet
                if tx.kind is not TxKind.APP_CALL or pkt is None or pkt.dst.address != addr:
                    continue
                try:
                    amount = BridgePayload.decode(pkt.payload).amount
                except MalformedPayload:
                    continue
                locked[(src, pkt.dst.chain)] = locked.get((src, pkt.dst.chain), 0) + amount
    report.bridge_locked_canonical = sum(locked.values())
    for dst, ledger in truth.ledgers.items():
        report.bridge_locked += ledger.locked
        report.bridge_minted += ledger.minted
        for src, minted in sorted(ledger.minted_from.items()):
            backing = locked.get((src, dst), 0)
            if minted > backing:
                report.unbacked_mints.append(f"chain {dst} minted {minted} from chain {src}, canonical lock is {backing}")
