"""Scenario configuration and the ``.scn`` text format.

A scenario file is a sequence of ``[section]`` blocks holding ``key = value``
lines, plus a ``[script]`` block of timed actions::

    [scenario]
    name = honest_single
    seed = 7
    max_ticks = 40

    [chain A]
    id = 1
    confirmation_depth = 15

    [chain B]
    id = 2

    [script]
    @0 send(A, B, to=0x1111111111111111111111111111111111111111, payload=0xdeadbeef)

``#`` starts a comment. See docs/formats.md for every key and action.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .agents import ForgeProofMode, OracleBehavior, RelayerBehavior
from .bridge import DEFAULT_BRIDGE_ADDRESS
from .chain import EVM_CONFIRMATIONS
from .endpoint import DEFAULT_PROOF_TIMEOUT
from .packet import ADDRESS_LEN, CHAIN_ID_MAX, DEFAULT_MAX_PAYLOAD
from .proofs import SCHEMES

REORG_MODES = ("requeue", "shift", "drop")

ACTIONS: dict[str, tuple[int, dict[str, str], set[str]]] = {
    # verb: (positional chain args, optional kwargs with defaults, required kwargs)
    "send": (2, {"payload": "0x", "fee": "0", "payee": "0x" + "00" * ADDRESS_LEN, "label": ""}, {"to"}),
    "tx": (1, {"count": "1"}, set()),
    "mine": (1, {"count": "1"}, set()),
    "reorg": (1, {"extend": "1", "mode": "requeue"}, {"depth"}),
    "bridge": (2, {"fee": "0", "label": ""}, {"user", "recipient", "amount"}),
    "collude": (2, {"payload": "0x", "label": ""}, {"to"}),
}
MESSAGE_VERBS = ("send", "bridge", "collude")


class ConfigInvalid(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class ChainSpec:
    name: str
    id: int
    confirmation_depth: int = EVM_CONFIRMATIONS
    proof_scheme: str = "merkle_patricia"
    block_interval: int = 1


@dataclass(frozen=True)
class OracleSpec:
    behavior: str = "honest"
    forge_rate: float = 1.0


@dataclass(frozen=True)
class RelayerSpec:
    behavior: str = "honest"
    forge_mode: str = "mutate"
    forge_rate: float = 1.0
    withhold: tuple[str, ...] = ()
    withhold_rate: float = 0.0
    min_fee: int = 0


@dataclass(frozen=True)
class Action:
    tick: int
    verb: str
    args: tuple[str, ...] = ()
    kwargs: tuple[tuple[str, str], ...] = ()

    def kw(self, key: str) -> str:
        for k, v in self.kwargs:
            if k == key:
                return v
        return ACTIONS[self.verb][1][key]

    def to_line(self) -> str:
        parts = list(self.args) + [f"{k}={v}" for k, v in self.kwargs]
        return f"@{self.tick} {self.verb}({', '.join(parts)})"


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 0
    max_ticks: int = 100
    collusion_allowed: bool = False
    expect_exit: int | None = None
    description: str = ""
    chains: tuple[ChainSpec, ...] = ()
    oracle: OracleSpec = field(default_factory=OracleSpec)
    relayer: RelayerSpec = field(default_factory=RelayerSpec)
    max_payload: int = DEFAULT_MAX_PAYLOAD
    proof_timeout: int = DEFAULT_PROOF_TIMEOUT
    bridge_address: bytes = DEFAULT_BRIDGE_ADDRESS
    bridge_funds: tuple[tuple[str, bytes, int], ...] = ()
    script: tuple[Action, ...] = ()

    def chain(self, name: str) -> ChainSpec:
        for c in self.chains:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def honest(self) -> bool:
        return self.oracle.behavior == "honest" and self.relayer.behavior == "honest"

    def ordered_script(self) -> list[Action]:
        return sorted(self.script, key=lambda a: a.tick)

    def labels(self) -> list[str]:
        """Message labels in execution order; unlabeled messages get ``m<n>``."""
        out = []
        for n, a in enumerate(a for a in self.ordered_script() if a.verb in MESSAGE_VERBS):
            out.append(a.kw("label") or f"m{n}")
        return out

    def with_seed(self, seed: int) -> ScenarioConfig:
        return replace(self, seed=seed)

    def validate(self) -> ScenarioConfig:
        errors = _validate(self)
        if errors:
            raise ConfigInvalid(errors)
        return self


# -- parsing ------------------------------------------------------------------

_SECTION = re.compile(r"^\[\s*([a-z]+)(?:\s+([A-Za-z0-9_]+))?\s*\]$")
_ACTION = re.compile(r"^@(\d+)\s+([a-z]+)\s*\((.*)\)$")
_NAME = re.compile(r"^[A-Za-z0-9_]+$")


def parse_hex(value: str, length: int | None = None, what: str = "value") -> bytes:
    v = value[2:] if value.lower().startswith("0x") else value
    try:
        out = bytes.fromhex(v)
    except ValueError:
        raise ValueError(f"{what}: {value!r} is not hex") from None
    if length is not None and len(out) != length:
        raise ValueError(f"{what}: expected {length} bytes, got {len(out)}")
    return out


def _bool(v: str) -> bool:
    if v.lower() in ("true", "yes", "1"):
        return True
    if v.lower() in ("false", "no", "0"):
        return False
    raise ValueError(f"{v!r} is not a boolean")


def _strip_comment(line: str) -> str:
    i = line.find("#")
    return (line[:i] if i >= 0 else line).strip()


def parse_action(text: str, lineno: int = 0) -> Action:
    m = _ACTION.match(text)
    if not m:
        raise ConfigInvalid([f"script line {lineno}: expected '@<tick> verb(args)', got {text!r}"])
    tick, verb, inner = int(m.group(1)), m.group(2), m.group(3)
    args, kwargs = [], []
    for part in (p.strip() for p in inner.split(",")):
        if not part:
            continue
        if "=" in part:
            k, v = (s.strip() for s in part.split("=", 1))
            kwargs.append((k, v))
        else:
            if kwargs:
                raise ConfigInvalid([f"script line {lineno}: positional argument after keyword"])
            args.append(part)
    return Action(tick, verb, tuple(args), tuple(kwargs))


def parse_scenario(text: str, default_seed: int = 0) -> ScenarioConfig:
    """Parse ``.scn`` text. ``default_seed`` applies only when the file sets no seed."""
    errors: list[str] = []
    top: dict[str, str] = {}
    chains: list[tuple[str, dict[str, str]]] = []
    oracle: dict[str, str] = {}
    relayer: dict[str, str] = {}
    endpoint: dict[str, str] = {}
    bridge: dict[str, str] = {}
    funds: list[str] = []
    script: list[Action] = []
    current: dict[str, str] | None = None
    section = None

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw)
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            section, arg = m.group(1), m.group(2)
            if section == "chain":
                if not arg:
                    errors.append(f"line {lineno}: [chain] needs a name")
                current = {}
                chains.append((arg or "?", current))
            elif section in ("scenario", "oracle", "relayer", "endpoint", "bridge", "script"):
                current = {"scenario": top, "oracle": oracle, "relayer": relayer, "endpoint": endpoint, "bridge": bridge, "script": None}[section]
            else:
                errors.append(f"line {lineno}: unknown section [{section}]")
                current = {}
            continue
        if section == "script":
            try:
                script.append(parse_action(line, lineno))
            except ConfigInvalid as exc:
                errors.extend(exc.errors)
            continue
        if current is None or "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value' inside a section, got {line!r}")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if section == "bridge" and key == "fund":
            funds.append(value)
        elif key in current:
            errors.append(f"line {lineno}: duplicate key {key!r} in [{section}]")
        else:
            current[key] = value

    cfg = ScenarioConfig()
    conv = _Converter(errors)
    cfg = replace(
        cfg,
        name=top.pop("name", cfg.name),
        seed=conv.int(top, "scenario.seed", "seed", default_seed),
        max_ticks=conv.int(top, "scenario.max_ticks", "max_ticks", cfg.max_ticks),
        collusion_allowed=conv.bool(top, "scenario.collusion_allowed", "collusion_allowed", cfg.collusion_allowed),
        expect_exit=conv.int(top, "scenario.expect_exit", "expect_exit", None),
        description=top.pop("description", ""),
        max_payload=conv.int(endpoint, "endpoint.max_payload", "max_payload", cfg.max_payload),
        proof_timeout=conv.int(endpoint, "endpoint.proof_timeout", "proof_timeout", cfg.proof_timeout),
        script=tuple(script),
    )
    specs = []
    for name, kv in chains:
        specs.append(
            ChainSpec(
                name=name,
                id=conv.int(kv, f"chain {name}.id", "id", -1),
                confirmation_depth=conv.int(kv, f"chain {name}.confirmation_depth", "confirmation_depth", EVM_CONFIRMATIONS),
                proof_scheme=kv.pop("proof_scheme", "merkle_patricia"),
                block_interval=conv.int(kv, f"chain {name}.block_interval", "block_interval", 1),
            )
        )
        conv.leftover(kv, f"chain {name}")
    cfg = replace(cfg, chains=tuple(specs))
    cfg = replace(
        cfg,
        oracle=OracleSpec(
            behavior=oracle.pop("behavior", "honest"),
            forge_rate=conv.float(oracle, "oracle.forge_rate", "forge_rate", 1.0),
        ),
        relayer=RelayerSpec(
            behavior=relayer.pop("behavior", "honest"),
            forge_mode=relayer.pop("forge_mode", "mutate"),
            forge_rate=conv.float(relayer, "relayer.forge_rate", "forge_rate", 1.0),
            withhold=tuple(s.strip() for s in relayer.pop("withhold", "").split(",") if s.strip()),
            withhold_rate=conv.float(relayer, "relayer.withhold_rate", "withhold_rate", 0.0),
            min_fee=conv.int(relayer, "relayer.min_fee", "min_fee", 0),
        ),
    )
    if "address" in bridge:
        try:
            cfg = replace(cfg, bridge_address=parse_hex(bridge.pop("address"), ADDRESS_LEN, "bridge.address"))
        except ValueError as exc:
            errors.append(str(exc))
    parsed_funds = []
    for entry in funds:
        parts = entry.split()
        try:
            if len(parts) != 3:
                raise ValueError("expected '<chain> <address> <amount>'")
            parsed_funds.append((parts[0], parse_hex(parts[1], ADDRESS_LEN, "address"), int(parts[2])))
        except ValueError as exc:
            errors.append(f"bridge.fund {entry!r}: {exc}")
    cfg = replace(cfg, bridge_funds=tuple(parsed_funds))
    for section_name, kv in (("scenario", top), ("oracle", oracle), ("relayer", relayer), ("endpoint", endpoint), ("bridge", bridge)):
        conv.leftover(kv, section_name)
    errors.extend(_validate(cfg))
    if errors:
        raise ConfigInvalid(errors)
    return cfg


class _Converter:
    def __init__(self, errors: list[str]):
        self.errors = errors

    def _get(self, kv, where, key, default, fn):
        if key not in kv:
            return default
        raw = kv.pop(key)
        try:
            return fn(raw)
        except ValueError:
            self.errors.append(f"{where}: cannot parse {raw!r}")
            return default

    def int(self, kv, where, key, default):
        return self._get(kv, where, key, default, lambda s: int(s, 0))

    def float(self, kv, where, key, default):
        return self._get(kv, where, key, default, float)

    def bool(self, kv, where, key, default):
        return self._get(kv, where, key, default, _bool)

    def leftover(self, kv, where):
        for key in kv:
            self.errors.append(f"{where}.{key}: unknown key")


def load_scenario(path: str | Path, default_seed: int = 0) -> ScenarioConfig:
    return parse_scenario(Path(path).read_text(), default_seed)


# -- validation ---------------------------------------------------------------


def _validate(cfg: ScenarioConfig) -> list[str]:
    errors = []
    if not 0 <= cfg.seed < 2**64:
        errors.append("scenario.seed: must be an unsigned 64-bit integer")
    if cfg.max_ticks < 1:
        errors.append("scenario.max_ticks: must be positive")
    if cfg.max_payload < 0:
        errors.append("endpoint.max_payload: must be non-negative")
    if cfg.proof_timeout < 1:
        errors.append("endpoint.proof_timeout: must be positive")
    if not cfg.chains:
        errors.append("chains: at least one [chain <name>] section is required")
    names, ids = set(), set()
    for c in cfg.chains:
        where = f"chain {c.name}"
        if not _NAME.match(c.name):
            errors.append(f"{where}: bad chain name")
        if c.name in names:
            errors.append(f"{where}: duplicate chain name")
        if c.id in ids:
            errors.append(f"{where}.id: duplicate chain id {c.id}")
        names.add(c.name)
        ids.add(c.id)
        if not 0 <= c.id <= CHAIN_ID_MAX:
            errors.append(f"{where}.id: must be in 0..{CHAIN_ID_MAX}")
        if c.confirmation_depth < 1:
            errors.append(f"{where}.confirmation_depth: must be at least 1")
        if c.proof_scheme not in SCHEMES:
            errors.append(f"{where}.proof_scheme: expected one of {sorted(SCHEMES)}")
        if c.block_interval < 0:
            errors.append(f"{where}.block_interval: must be non-negative")

    for where, value, enum_cls in (
        ("oracle.behavior", cfg.oracle.behavior, OracleBehavior),
        ("relayer.behavior", cfg.relayer.behavior, RelayerBehavior),
        ("relayer.forge_mode", cfg.relayer.forge_mode, ForgeProofMode),
    ):
        if value not in {e.value for e in enum_cls}:
            errors.append(f"{where}: expected one of {sorted(e.value for e in enum_cls)}")
    for where, rate in (("oracle.forge_rate", cfg.oracle.forge_rate), ("relayer.forge_rate", cfg.relayer.forge_rate), ("relayer.withhold_rate", cfg.relayer.withhold_rate)):
        if not 0.0 <= rate <= 1.0:
            errors.append(f"{where}: must be within [0, 1]")
    if not cfg.collusion_allowed and "colluding" in (cfg.oracle.behavior, cfg.relayer.behavior):
        errors.append("scenario.collusion_allowed: colluding agents are forbidden unless collusion_allowed = true")

    for chain_name, _, amount in cfg.bridge_funds:
        if chain_name not in names:
            errors.append(f"bridge.fund: unknown chain {chain_name!r}")
        if amount < 0:
            errors.append("bridge.fund: amount must be non-negative")

    for a in cfg.script:
        errors.extend(f"script @{a.tick} {a.verb}: {e}" for e in _check_action(a, names, cfg))
    labels = cfg.labels()
    if len(set(labels)) != len(labels):
        errors.append("script: message labels must be unique")
    for lbl in cfg.relayer.withhold:
        if lbl not in labels:
            errors.append(f"relayer.withhold: unknown message label {lbl!r}")
    return errors


def _check_action(a: Action, chain_names: set[str], cfg: ScenarioConfig) -> list[str]:
    if a.verb not in ACTIONS:
        return [f"unknown action; expected one of {sorted(ACTIONS)}"]
    n_pos, optional, required = ACTIONS[a.verb]
    errs = []
    if a.tick >= cfg.max_ticks:
        errs.append(f"tick {a.tick} is beyond max_ticks {cfg.max_ticks}")
    if len(a.args) != n_pos:
        errs.append(f"expected {n_pos} chain argument(s), got {len(a.args)}")
    errs.extend(f"unknown chain {c!r}" for c in a.args if c not in chain_names)
    given = [k for k, _ in a.kwargs]
    errs.extend(f"unknown argument {k!r}" for k in given if k not in optional and k not in required)
    errs.extend(f"missing argument {k!r}" for k in sorted(required) if k not in given)
    if len(set(given)) != len(given):
        errs.append("duplicate argument")
    if errs:
        return errs
    kw = dict(a.kwargs)
    try:
        if a.verb in ("send", "collude"):
            if kw["to"] != "bridge":
                parse_hex(kw["to"], ADDRESS_LEN, "to")
            parse_hex(a.kw("payload"), None, "payload")
        if a.verb == "send":
            int(a.kw("fee"))
            parse_hex(a.kw("payee"), ADDRESS_LEN, "payee")
        if a.verb in ("tx", "mine") and int(a.kw("count")) < 1:
            errs.append("count must be positive")
        if a.verb == "reorg":
            if int(kw["depth"]) < 1 or int(a.kw("extend")) < 1:
                errs.append("depth and extend must be positive")
            if a.kw("mode") not in REORG_MODES:
                errs.append(f"mode must be one of {REORG_MODES}")
        if a.verb == "bridge":
            parse_hex(kw["user"], ADDRESS_LEN, "user")
            parse_hex(kw["recipient"], ADDRESS_LEN, "recipient")
            int(kw["amount"])
            int(a.kw("fee"))
    except ValueError as exc:
        errs.append(str(exc))
    if a.verb == "collude" and not cfg.collusion_allowed:
        errs.append("collude requires collusion_allowed = true")
    return errs


# -- writing ------------------------------------------------------------------


def dump_scenario(cfg: ScenarioConfig) -> str:
    lines = ["[scenario]", f"name = {cfg.name}", f"seed = {cfg.seed}", f"max_ticks = {cfg.max_ticks}"]
    lines.append(f"collusion_allowed = {str(cfg.collusion_allowed).lower()}")
    if cfg.expect_exit is not None:
        lines.append(f"expect_exit = {cfg.expect_exit}")
    if cfg.description:
        lines.append(f"description = {cfg.description}")
    for c in cfg.chains:
        lines += ["", f"[chain {c.name}]"]
        lines += [f"{f.name} = {getattr(c, f.name)}" for f in fields(c) if f.name != "name"]
    lines += ["", "[oracle]", f"behavior = {cfg.oracle.behavior}", f"forge_rate = {cfg.oracle.forge_rate!r}"]
    r = cfg.relayer
    lines += ["", "[relayer]", f"behavior = {r.behavior}", f"forge_mode = {r.forge_mode}", f"forge_rate = {r.forge_rate!r}"]
    if r.withhold:
        lines.append(f"withhold = {', '.join(r.withhold)}")
    lines += [f"withhold_rate = {r.withhold_rate!r}", f"min_fee = {r.min_fee}"]
    lines += ["", "[endpoint]", f"max_payload = {cfg.max_payload}", f"proof_timeout = {cfg.proof_timeout}"]
    lines += ["", "[bridge]", f"address = 0x{cfg.bridge_address.hex()}"]
    lines += [f"fund = {c} 0x{a.hex()} {n}" for c, a, n in cfg.bridge_funds]
    lines += ["", "[script]"] + [a.to_line() for a in cfg.script]
    return "\n".join(lines) + "\n"
