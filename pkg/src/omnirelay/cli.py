"""Command-line entry point: ``omnirelay run|verify-proof|list-scenarios|corpus``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

from .audit import EXIT_CONFIG, EXIT_OK, EXIT_UNSOUND
from .corpus import generate_corpus
from .harness import simulate
from .proofs import TxTrie, deserialize_proof, serialize_proof, verify_inclusion, ProofFormatError
from .scenario import ConfigInvalid, load_scenario

SEED_ENV = "OMNIRELAY_SEED"


def _env_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    return int(raw, 0)


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = load_scenario(args.scenario, default_seed=_env_seed())
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed).validate()
    except ConfigInvalid as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    result = simulate(cfg)
    text = result.report.to_text()
    if args.log_out:
        result.log.write(args.log_out)
    if args.audit_out:
        Path(args.audit_out).write_text(text)
    if args.proofs_out:
        _write_proofs(result, Path(args.proofs_out))
    if not args.quiet:
        sys.stdout.write(text)
    return result.report.exit_code


def _write_proofs(result, out: Path) -> None:
    """One ``<label>.proof`` plus ``<label>.root`` per message mined on its source chain."""
    out.mkdir(parents=True, exist_ok=True)
    for msg in result.truth.messages:
        chain = result.truth.chains.get(msg.src)
        located = chain.tx_id(msg.digest) if msg.accepted and msg.digest else None
        if located is None:
            continue
        block = chain.block_at(located.block_height)
        proof = TxTrie(block.transactions, chain.scheme).prove(located.index_in_block)
        (out / f"{msg.label}.proof").write_bytes(serialize_proof(proof))
        (out / f"{msg.label}.root").write_text(block.header.tx_root.hex() + "\n")


def cmd_verify_proof(args: argparse.Namespace) -> int:
    try:
        data = Path(args.proof).read_bytes()
        root = bytes.fromhex(args.root.removeprefix("0x"))
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        proof = deserialize_proof(data)
    except ProofFormatError as exc:
        print(f"invalid: malformed proof ({exc})")
        return EXIT_UNSOUND
    if len(root) == 32 and verify_inclusion(root, proof):
        print(f"valid: tx {proof.tx_digest.hex()} is included under root {root.hex()}")
        return EXIT_OK
    print("invalid: proof does not verify against the given root")
    return EXIT_UNSOUND


def cmd_list(args: argparse.Namespace) -> int:
    status = EXIT_OK
    for path in sorted(Path(args.directory).glob("*.scn")):
        try:
            cfg = load_scenario(path)
        except ConfigInvalid as exc:
            print(f"{path.name}: INVALID ({exc.errors[0]})")
            status = EXIT_CONFIG
            continue
        expect = "-" if cfg.expect_exit is None else cfg.expect_exit
        print(f"{path.name}: {cfg.name} expect_exit={expect} {cfg.description}".rstrip())
    return status


def cmd_corpus(args: argparse.Namespace) -> int:
    start = time.perf_counter()
    unsound = 0
    for entry in generate_corpus(args.count, args.seed):
        report = simulate(entry.config).report
        if not report.sound:
            unsound += 1
            print(f"{entry.config.name}: {len(report.soundness_violations)} soundness violation(s)")
    elapsed = time.perf_counter() - start
    print(f"ran {args.count} scenarios in {elapsed:.1f}s, {unsound} unsound")
    return EXIT_UNSOUND if unsound else EXIT_OK


class _Parser(argparse.ArgumentParser):
    """Usage errors exit 1 so that 2 stays reserved for soundness violations."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="omnirelay", description="Cross-chain message relay simulator and auditor.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario file and audit it")
    r.add_argument("scenario")
    r.add_argument("--seed", type=lambda s: int(s, 0), default=None, help=f"overrides the file seed and ${SEED_ENV}")
    r.add_argument("--log-out", help="write the event log here")
    r.add_argument("--audit-out", help="write the audit report here")
    r.add_argument("--proofs-out", help="directory for serialized inclusion proofs of sent messages")
    r.add_argument("-q", "--quiet", action="store_true", help="do not print the audit report")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify-proof", help="check a serialized proof against a tx root")
    v.add_argument("proof")
    v.add_argument("root", help="32-byte tx root, hex")
    v.set_defaults(func=cmd_verify_proof)

    ls = sub.add_parser("list-scenarios", help="list .scn files in a directory")
    ls.add_argument("directory")
    ls.set_defaults(func=cmd_list)

    c = sub.add_parser("corpus", help="run generated random scenarios")
    c.add_argument("--count", type=int, default=500)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_corpus)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
