#!/usr/bin/env python3
"""Generate and audit a seeded random corpus, with a per-class summary."""

import argparse
import sys
import time
from collections import Counter

from omnirelay.corpus import generate_corpus
from omnirelay.harness import simulate


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    start = time.perf_counter()
    per_class: Counter = Counter()
    unsound: Counter = Counter()
    short: Counter = Counter()
    worst_ratio = 0
    for entry in generate_corpus(args.count, args.seed):
        report = simulate(entry.config).report
        per_class[entry.cls] += 1
        unsound[entry.cls] += not report.sound
        short[entry.cls] += report.delivered < report.sends
        if entry.cls.startswith("honest"):
            worst_ratio = max(worst_ratio, report.header_storage_ratio)
    elapsed = time.perf_counter() - start

    print(f"{'class':<12} {'runs':>5} {'unsound':>8} {'undelivered':>12}")
    for cls in sorted(per_class):
        print(f"{cls:<12} {per_class[cls]:>5} {unsound[cls]:>8} {short[cls]:>12}")
    print(f"max header storage ratio (honest agents): {worst_ratio}")
    print(f"{sum(per_class.values())} scenarios in {elapsed:.1f}s")
    return 2 if sum(unsound.values()) else 0


if __name__ == "__main__":
    sys.exit(main())
