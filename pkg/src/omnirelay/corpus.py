"""Seeded random scenario generator for bulk runs."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .bridge import DEFAULT_BRIDGE_ADDRESS
from .scenario import Action, ChainSpec, OracleSpec, RelayerSpec, ScenarioConfig

CLASSES = ("honest", "honest_drop", "oracle_adv", "relayer_adv")
DEPTHS = (1, 3, 6, 15)
SEND_WINDOW = 20
SETTLE_MARGIN = 12


@dataclass(frozen=True)
class CorpusEntry:
    index: int
    cls: str
    config: ScenarioConfig


def _hex(b: bytes) -> str:
    return "0x" + b.hex()


def generate_scenario(seed: int, cls: str | None = None) -> ScenarioConfig:
    rng = random.Random(f"corpus:{seed}")
    cls = cls or rng.choice(CLASSES)
    if cls not in CLASSES:
        raise ValueError(f"unknown corpus class {cls!r}")
    ids = rng.sample(range(1, 1 << 16), rng.randint(2, 4))
    chains = tuple(
        ChainSpec(f"C{i}", cid, rng.choice(DEPTHS), rng.choice(("merkle_patricia", "binary_merkle"))) for i, cid in enumerate(ids)
    )
    names = [c.name for c in chains]
    script: list[Action] = []
    funds = []

    for n in range(rng.randint(1, 50)):
        tick = rng.randrange(SEND_WINDOW)
        src, dst = rng.sample(names, 2)
        if rng.random() < 0.2:
            user = rng.randbytes(20)
            amount = rng.randint(1, 1000)
            funds.append((src, user, amount))
            payload = dict(user=_hex(user), recipient=_hex(rng.randbytes(20)), amount=str(amount))
            script.append(Action(tick, "bridge", (src, dst), tuple(payload.items())))
        else:
            kw = (("to", _hex(rng.randbytes(20))), ("payload", _hex(rng.randbytes(rng.randrange(65)))), ("fee", str(rng.randrange(10))))
            script.append(Action(tick, "send", (src, dst), kw))
        if rng.random() < 0.3:
            script.append(Action(rng.randrange(SEND_WINDOW), "tx", (rng.choice(names),), (("count", str(rng.randint(1, 3))),)))

    modes = ("requeue", "shift", "drop") if cls == "honest_drop" else ("requeue", "shift")
    for _ in range(rng.randint(0, 3) if cls != "honest_drop" else rng.randint(1, 3)):
        spec = rng.choice(chains)
        if spec.confirmation_depth < 2:
            continue
        depth = rng.randint(1, spec.confirmation_depth - 1)
        tick = rng.randint(depth, SEND_WINDOW + 10)
        script.append(Action(tick, "reorg", (spec.name,), (("depth", str(depth)), ("extend", str(rng.randint(1, 2))), ("mode", rng.choice(modes)))))

    oracle, relayer = OracleSpec(), RelayerSpec()
    if cls == "oracle_adv":
        oracle = OracleSpec(rng.choice(("forge", "premature")), rng.choice((0.5, 1.0)))
    elif cls == "relayer_adv":
        behavior = rng.choice(("forge", "withhold"))
        relayer = RelayerSpec(
            behavior,
            forge_mode=rng.choice(("mutate", "fabricate", "substitute", "replay", "mixed")),
            withhold_rate=0.5 if behavior == "withhold" else 0.0,
        )

    max_depth = max(c.confirmation_depth for c in chains)
    return ScenarioConfig(
        name=f"corpus-{seed}-{cls}",
        seed=seed,
        max_ticks=SEND_WINDOW + 10 + 2 * max_depth + SETTLE_MARGIN,
        chains=chains,
        oracle=oracle,
        relayer=relayer,
        bridge_address=DEFAULT_BRIDGE_ADDRESS,
        bridge_funds=tuple(funds),
        script=tuple(sorted(script, key=lambda a: a.tick)),
    ).validate()


def generate_corpus(count: int, base_seed: int = 0) -> list[CorpusEntry]:
    out = []
    for i in range(count):
        cfg = generate_scenario(base_seed + i)
        out.append(CorpusEntry(i, cfg.name.rsplit("-", 1)[1], cfg))
    return out

