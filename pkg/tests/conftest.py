from __future__ import annotations

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(Path(__file__).resolve().parent))

_VERDICTS: list[str] = []


@pytest.fixture(scope="session")
def scenario_dir() -> Path:
    return ROOT / "scenarios"


@pytest.fixture
def verdict_line():
    """Record one ``PASS``/``FAIL`` line per acceptance criterion for the terminal summary."""

    def record(criterion: str, ok: bool, detail: str = "") -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}".rstrip()
        _VERDICTS.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
