#!/usr/bin/env python3
"""Run every scenario fixture and compare its exit code to the declared one."""

import argparse
import sys
from pathlib import Path

from omnirelay.harness import simulate
from omnirelay.scenario import load_scenario

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("directory", nargs="?", default=ROOT / "scenarios", type=Path)
    args = ap.parse_args()

    mismatches = 0
    for path in sorted(args.directory.glob("*.scn")):
        cfg = load_scenario(path)
        report = simulate(cfg).report
        ok = cfg.expect_exit is None or report.exit_code == cfg.expect_exit
        mismatches += not ok
        print(
            f"{'ok  ' if ok else 'MISMATCH'} {path.name:<32} exit={report.exit_code} "
            f"sent={report.sends} delivered={report.delivered} violations={len(report.soundness_violations)}"
        )
    return 1 if mismatches else 0


if __name__ == "__main__":
    sys.exit(main())
