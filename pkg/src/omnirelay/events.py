"""Append-only structured event log.

One record per line::

    tick|STEP_TAG|src_chain|dst_chain|tx_digest_hex|block_height|extra

Absent fields are written as ``-``. ``extra`` is a ``;``-separated list of
``key=value`` pairs in emission order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator


class Step(str, enum.Enum):
    SEND = "SEND"  # 1
    PKT_BUILT = "PKT_BUILT"  # 2
    NETWORK_NOTIFY = "NETWORK_NOTIFY"  # 3
    RELAYER_NOTIFY = "RELAYER_NOTIFY"  # 4
    ORACLE_NOTIFY = "ORACLE_NOTIFY"  # 5
    HDR_READ = "HDR_READ"  # 6
    PROOF_READ = "PROOF_READ"  # 7
    HDR_STORED = "HDR_STORED"  # 8
    HASH_FWD = "HASH_FWD"  # 9 and 10, distinguished by extra step=
    PROOFS_SUBMITTED = "PROOFS_SUBMITTED"  # 11
    VERDICT = "VERDICT"  # 12
    DELIVERED = "DELIVERED"  # 13
    # annotations outside the step sequence
    MINE = "MINE"
    REORG = "REORG"
    REJECTED = "REJECTED"
    HDR_CONFLICT = "HDR_CONFLICT"
    RETIRED = "RETIRED"
    REFUSED = "REFUSED"
    EXPIRED = "EXPIRED"
    PARKED = "PARKED"
    COLLUDE = "COLLUDE"


PROTOCOL_STEPS = {
    Step.SEND: (1,),
    Step.PKT_BUILT: (2,),
    Step.NETWORK_NOTIFY: (3,),
    Step.RELAYER_NOTIFY: (4,),
    Step.ORACLE_NOTIFY: (5,),
    Step.HDR_READ: (6,),
    Step.PROOF_READ: (7,),
    Step.HDR_STORED: (8,),
    Step.HASH_FWD: (9, 10),
    Step.PROOFS_SUBMITTED: (11,),
    Step.VERDICT: (12,),
    Step.DELIVERED: (13,),
}


def _field(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, (bytes, bytearray)):
        return bytes(v).hex()
    return str(v)


@dataclass(frozen=True)
class EventRecord:
    seq: int
    tick: int
    tag: Step
    src: int | None = None
    dst: int | None = None
    tx: bytes | None = None
    height: int | None = None
    extra: tuple[tuple[str, str], ...] = ()

    def get(self, key: str, default: str | None = None) -> str | None:
        for k, v in self.extra:
            if k == key:
                return v
        return default

    def to_line(self) -> str:
        extra = ";".join(f"{k}={v}" for k, v in self.extra) or "-"
        return "|".join([str(self.tick), self.tag.value, _field(self.src), _field(self.dst), _field(self.tx), _field(self.height), extra])

    @classmethod
    def from_line(cls, line: str, seq: int = 0) -> EventRecord:
        tick, tag, src, dst, tx, height, extra = line.rstrip("\n").split("|")
        opt_int = lambda s: None if s == "-" else int(s)  # noqa: E731
        pairs = () if extra == "-" else tuple(tuple(kv.split("=", 1)) for kv in extra.split(";"))
        return cls(seq, int(tick), Step(tag), opt_int(src), opt_int(dst), None if tx == "-" else bytes.fromhex(tx), opt_int(height), pairs)


class EventLog:
    def __init__(self) -> None:
        self.records: list[EventRecord] = []
        self.tick = 0

    def emit(self, tag: Step, src=None, dst=None, tx=None, height=None, **extra) -> EventRecord:
        pairs = tuple((k, _field(v)) for k, v in extra.items())
        rec = EventRecord(len(self.records), self.tick, tag, src, dst, tx, height, pairs)
        self.records.append(rec)
        return rec

    def __iter__(self) -> Iterator[EventRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def of(self, *tags: Step) -> list[EventRecord]:
        return [r for r in self.records if r.tag in tags]

    def dumps(self) -> str:
        return "".join(r.to_line() + "\n" for r in self.records)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> EventLog:
        log = cls()
        for line in text.splitlines():
            if line.strip():
                log.records.append(EventRecord.from_line(line, len(log.records)))
        return log
