"""Tick-boundary message passing between actors."""

from __future__ import annotations

from .events import EventLog


class Bus:
    """Messages posted during tick ``n`` are handed out at tick ``n + 1``."""

    def __init__(self, log: EventLog | None = None):
        self.log = log if log is not None else EventLog()
        self._queue: list[tuple[str, str, tuple]] = []

    @property
    def tick(self) -> int:
        return self.log.tick

    def post(self, target: str, method: str, *args) -> None:
        self._queue.append((target, method, args))

    def drain(self) -> list[tuple[str, str, tuple]]:
        out, self._queue = self._queue, []
        return out

    def pending(self) -> int:
        return len(self._queue)


def endpoint_target(chain: int) -> str:
    return f"endpoint:{chain}"
