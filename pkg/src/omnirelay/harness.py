"""Deterministic discrete-event driver.

Each tick runs in a fixed order:

1. chains: scripted actions for this tick, then automatic block production;
2. endpoints, oracle, relayer receive the messages posted during the
   previous tick;
3. endpoints, oracle, relayer take their periodic step.

The oracle and relayer both react to tick ``n`` messages during tick
``n + 1``, so Steps 6 and 7 carry no mutual ordering an actor could observe.
"""

from __future__ import annotations

import random
from collections import defaultdict
from dataclasses import dataclass, field

from .agents import (
    ForgeProofMode,
    IndependencePolicy,
    OracleAgent,
    OracleBehavior,
    RelayerAgent,
    RelayerBehavior,
    forge_colluding_pair,
    forged_transaction,
)
from .bridge import BridgeApp, BridgeError, BridgeLedger
from .bus import Bus
from .chain import ChainState, Transaction, TxId, TxKind
from .endpoint import Endpoint, EndpointError, Submission
from .events import EventLog, Step
from .packet import Dst, Packet, RelayerArgs
from .proofs import scheme_by_name
from .scenario import Action, ScenarioConfig, parse_hex


@dataclass
class MessageRecord:
    label: str
    verb: str
    src: int
    dst: int
    digest: bytes
    tick: int
    accepted: bool = True


@dataclass
class GroundTruth:
    chains: dict[int, ChainState]
    head_history: dict[int, list[bytes]]
    honest: bool
    messages: list[MessageRecord] = field(default_factory=list)
    ledgers: dict[int, BridgeLedger] = field(default_factory=dict)
    bridge_address: bytes = b""
    endpoints: dict[int, Endpoint] = field(default_factory=dict)


class Simulation:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg.validate()
        self.rng = random.Random(f"{cfg.seed}:harness")
        self.log = EventLog()
        self.bus = Bus(self.log)
        self.names = {c.name: c.id for c in cfg.chains}
        self.chains: dict[int, ChainState] = {}
        self.endpoints: dict[int, Endpoint] = {}
        for spec in cfg.chains:
            self.chains[spec.id] = ChainState(spec.id, spec.confirmation_depth, scheme_by_name(spec.proof_scheme))
        for spec in cfg.chains:
            ep = Endpoint(spec.id, self.bus, cfg.max_payload, cfg.proof_timeout)
            for other in cfg.chains:
                ep.register_library(other.id, scheme_by_name(other.proof_scheme))
            self.endpoints[spec.id] = ep

        self.policy = IndependencePolicy(cfg.collusion_allowed)
        self.policy.check(OracleBehavior(cfg.oracle.behavior), RelayerBehavior(cfg.relayer.behavior))
        self.oracle = OracleAgent(
            self.bus,
            self.chains,
            OracleBehavior(cfg.oracle.behavior),
            random.Random(f"{cfg.seed}:oracle"),
            forge_rate=cfg.oracle.forge_rate,
        )
        self.relayer = RelayerAgent(
            self.bus,
            self.chains,
            RelayerBehavior(cfg.relayer.behavior),
            random.Random(f"{cfg.seed}:relayer"),
            min_fee=cfg.relayer.min_fee,
            forge_mode=ForgeProofMode(cfg.relayer.forge_mode),
            forge_rate=cfg.relayer.forge_rate,
            withhold_rate=cfg.relayer.withhold_rate,
        )
        self.ledgers = {cid: BridgeLedger(cid) for cid in self.chains}
        self.bridges = {cid: BridgeApp(self.ledgers[cid], self.chains[cid], self.endpoints[cid], cfg.bridge_address) for cid in self.chains}
        for chain_name, addr, amount in cfg.bridge_funds:
            self.ledgers[self.names[chain_name]].fund(addr, amount)

        self.targets = {"oracle": self.oracle, "relayer": self.relayer}
        self.targets.update({ep.target: ep for ep in self.endpoints.values()})
        self._order = {ep.target: i for i, ep in enumerate(self.endpoints.values())}
        self._order.update(oracle=len(self._order), relayer=len(self._order) + 1)

        self.head_history: dict[int, list[bytes]] = {cid: [] for cid in self.chains}
        self.messages: list[MessageRecord] = []
        self._labels = iter(cfg.labels())
        self._nonce: dict[int, int] = defaultdict(int)
        self._script: dict[int, list[Action]] = defaultdict(list)
        for a in cfg.ordered_script():
            self._script[a.tick].append(a)
        self.tick = -1

    # -- main loop ----------------------------------------------------------------

    def run(self) -> GroundTruth:
        for tick in range(self.cfg.max_ticks):
            self.step(tick)
        return self.truth()

    def step(self, tick: int) -> None:
        self.tick = self.log.tick = tick
        inbox = self.bus.drain()
        for action in self._script.get(tick, ()):
            self.apply(action)
        for spec in self.cfg.chains:
            if spec.block_interval and (tick + 1) % spec.block_interval == 0:
                self.mine(spec.id)
        for cid, chain in self.chains.items():
            self.head_history[cid].append(chain.head.header_hash)
        inbox.sort(key=lambda m: self._order[m[0]])
        for target, method, args in inbox:
            getattr(self.targets[target], method)(*args)
        for ep in self.endpoints.values():
            ep.step()
        self.oracle.step()
        self.relayer.step()

    def truth(self) -> GroundTruth:
        return GroundTruth(self.chains, self.head_history, self.cfg.honest, self.messages, self.ledgers, self.cfg.bridge_address, self.endpoints)

    # -- scripted actions -----------------------------------------------------------

    def apply(self, a: Action) -> None:
        getattr(self, f"_do_{a.verb}")(a)

    def mine(self, cid: int) -> None:
        chain = self.chains[cid]
        hdr = chain.mine_block()
        block = chain.block_at(hdr.height)
        self.log.emit(Step.MINE, cid, None, None, hdr.height, hdr=hdr.header_hash, txs=len(block.transactions))
        self.endpoints[cid].on_block(block)

    def _nonce_for(self, cid: int) -> int:
        self._nonce[cid] += 1
        return self._nonce[cid]

    def _address(self, value: str) -> bytes:
        return self.cfg.bridge_address if value == "bridge" else parse_hex(value, 20)

    def _do_mine(self, a: Action) -> None:
        for _ in range(int(a.kw("count"))):
            self.mine(self.names[a.args[0]])

    def _do_tx(self, a: Action) -> None:
        cid = self.names[a.args[0]]
        for _ in range(int(a.kw("count"))):
            self.chains[cid].submit_transaction(Transaction(cid, self.rng.randbytes(20), TxKind.PLAIN, nonce=self._nonce_for(cid)))

    def _do_send(self, a: Action) -> None:
        src, dst = self.names[a.args[0]], self.names[a.args[1]]
        label = next(self._labels)
        packet = Packet(Dst(dst, self._address(a.kw("to"))), parse_hex(a.kw("payload")))
        args = RelayerArgs(parse_hex(a.kw("payee"), 20), int(a.kw("fee")))
        tx = Transaction(src, self.rng.randbytes(20), TxKind.APP_CALL, packet, args, self._nonce_for(src))
        chain = self.chains[src]
        t = chain.submit_transaction(tx)
        try:
            self.endpoints[src].send(tx, t, packet.dst, packet.payload, args)
        except EndpointError as exc:
            chain.revert_transaction(t.digest)
            self._reject(a, label, src, dst, t.digest, exc)
            return
        self._relayer_targets(label, t.digest)
        self.messages.append(MessageRecord(label, "send", src, dst, t.digest, self.tick))

    def _do_bridge(self, a: Action) -> None:
        src, dst = self.names[a.args[0]], self.names[a.args[1]]
        label = next(self._labels)
        try:
            t = self.bridges[src].lock_and_send(
                parse_hex(a.kw("user"), 20),
                int(a.kw("amount")),
                Dst(dst, self.cfg.bridge_address),
                parse_hex(a.kw("recipient"), 20),
                nonce=self._nonce_for(src),
                fee=int(a.kw("fee")),
            )
        except (BridgeError, EndpointError) as exc:
            self._reject(a, label, src, dst, None, exc)
            return
        self._relayer_targets(label, t.digest)
        self.messages.append(MessageRecord(label, "bridge", src, dst, t.digest, self.tick))

    def _do_collude(self, a: Action) -> None:
        src, dst = self.names[a.args[0]], self.names[a.args[1]]
        label = next(self._labels)
        chain = self.chains[src]
        packet = Packet(Dst(dst, self._address(a.kw("to"))), parse_hex(a.kw("payload")))
        fake = forged_transaction(src, packet.dst, packet.payload, self.rng.getrandbits(63), self.rng.randbytes(20))
        height = chain.height + 1
        header, proof = forge_colluding_pair(
            fake, packet.dst, packet.payload, policy=self.policy, height=height, parent_hash=chain.head.header_hash, scheme=chain.scheme
        )
        self.log.emit(Step.COLLUDE, src, dst, fake.digest, height, hdr=header.header_hash, label=label)
        sub = Submission(packet, TxId(src, fake.digest, height, 0), proof, fake.encode())
        self.oracle.inject_forged(dst, header)
        self.relayer.inject_forged(dst, header, sub)
        self.messages.append(MessageRecord(label, "collude", src, dst, fake.digest, self.tick))

    def _do_reorg(self, a: Action) -> None:
        cid = self.names[a.args[0]]
        chain = self.chains[cid]
        depth, extend, mode = int(a.kw("depth")), int(a.kw("extend")), a.kw("mode")
        fork = chain.height - depth + 1
        if fork < 1:
            self.log.emit(Step.REJECTED, cid, None, None, chain.height, reason="InvalidFork", action="reorg")
            return
        displaced = chain.canonical[fork:]
        if mode == "shift":
            tx_lists = [[]] + [list(b.transactions) for b in displaced] + [[]] * (extend - 1)
        else:
            tx_lists = [[] for _ in range(depth + extend)]
        fresh = chain.inject_reorg(fork, chain.build_branch(fork, tx_lists), requeue=mode != "drop")
        self.log.emit(Step.REORG, cid, None, None, fork, depth=depth, mode=mode, head=chain.height, hdr=chain.head.header_hash)
        for block in fresh:
            self.endpoints[cid].on_block(block)

    def _reject(self, a: Action, label: str, src: int, dst: int, digest: bytes | None, exc: Exception) -> None:
        self.log.emit(Step.REJECTED, src, dst, digest, None, reason=type(exc).__name__, action=a.verb, label=label)
        self.messages.append(MessageRecord(label, a.verb, src, dst, digest or b"", self.tick, accepted=False))

    def _relayer_targets(self, label: str, digest: bytes) -> None:
        if label in self.cfg.relayer.withhold:
            self.relayer.withhold[digest] = None


@dataclass
class RunResult:
    config: ScenarioConfig
    log: EventLog
    truth: GroundTruth
    report: "AuditReport"  # noqa: F821
    sim: Simulation


def simulate(cfg: ScenarioConfig) -> RunResult:
    from .audit import audit

    sim = Simulation(cfg)
    truth = sim.run()
    return RunResult(cfg, sim.log, truth, audit(sim.log, truth, cfg.name), sim)


def run_scenario(cfg: ScenarioConfig):
    """Run ``cfg`` to ``max_ticks``; returns ``(event_log, audit_report)``."""
    result = simulate(cfg)
    return result.log, result.report
