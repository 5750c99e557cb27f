from dataclasses import replace
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from omnirelay.audit import audit
from omnirelay.events import EventLog, EventRecord, Step
from omnirelay.harness import simulate
from omnirelay.scenario import load_scenario, parse_scenario


def run(scenario_dir, name):
    return simulate(load_scenario(scenario_dir / f"{name}.scn"))


def first(log, tag):
    return log.of(tag)[0]


def test_messages_cross_tick_boundaries(scenario_dir):
    res = run(scenario_dir, "honest_single")
    log = res.log
    assert first(log, Step.ORACLE_NOTIFY).tick + 1 == first(log, Step.HDR_READ).tick
    assert first(log, Step.RELAYER_NOTIFY).tick + 1 == first(log, Step.PROOF_READ).tick
    assert first(log, Step.HDR_READ).tick == first(log, Step.PROOF_READ).tick
    assert first(log, Step.HASH_FWD).tick < first(log, Step.PROOFS_SUBMITTED).tick


def test_clean_runs_have_no_ordering_or_gate_violations(scenario_dir):
    for name in ("honest_single", "honest_multi", "dedup_k5", "bridge_honest", "confirmation_gate"):
        rep = run(scenario_dir, name).report
        assert rep.sound and not rep.ordering_violations and not rep.gate_violations, name
        assert rep.delivered == rep.sends and not rep.liveness_misses


def _doctored(res, lines):
    return audit(EventLog.loads("".join(lines)), res.truth)


def test_auditor_flags_duplicate_delivery(scenario_dir):
    res = run(scenario_dir, "honest_single")
    lines = res.log.dumps().splitlines(keepends=True)
    d = next(line for line in lines if "|DELIVERED|" in line)
    rep = _doctored(res, lines + [d])
    assert [v.reason for v in rep.soundness_violations] == ["DuplicateDelivery"]


def test_auditor_flags_early_delivery(scenario_dir):
    res = run(scenario_dir, "honest_single")
    lines = res.log.dumps().splitlines(keepends=True)
    d = EventRecord.from_line(next(line for line in lines if "|DELIVERED|" in line))
    early = replace(d, tick=5).to_line() + "\n"
    rep = _doctored(res, [line for line in lines if "|DELIVERED|" not in line] + [early])
    assert [v.reason for v in rep.soundness_violations] == ["InsufficientConfirmations"]


def test_auditor_flags_unbound_packet(scenario_dir):
    res = run(scenario_dir, "honest_single")
    text = res.log.dumps()
    pkt = first(res.log, Step.DELIVERED).get("pkt")
    rep = audit(EventLog.loads(text.replace(f"pkt={pkt}\n", "pkt=" + "00" * 32 + "\n")), res.truth)
    assert [v.reason for v in rep.soundness_violations] == ["PacketNotBound"]


def test_auditor_flags_misordered_steps(scenario_dir):
    res = run(scenario_dir, "honest_single")
    lines = res.log.dumps().splitlines(keepends=True)
    i = next(k for k, line in enumerate(lines) if "|HDR_STORED|" in line)
    j = next(k for k, line in enumerate(lines) if "|PROOFS_SUBMITTED|" in line)
    lines[i], lines[j] = lines[j], lines[i]
    assert _doctored(res, lines).ordering_violations


def test_premature_oracle_is_caught_by_gate_audit(scenario_dir):
    rep = run(scenario_dir, "oracle_premature").report
    assert rep.gate_violations and rep.sound
    assert rep.delivered == rep.sends  # honest relayer still waits for depth


def test_forging_oracle_blocks_but_never_breaks_delivery(scenario_dir):
    rep = run(scenario_dir, "oracle_forge").report
    assert rep.sound and rep.delivered == 0
    assert {m.reason for m in rep.liveness_misses} == {"HeaderMismatch"}


@pytest.mark.parametrize("mode", ["mutate", "fabricate", "substitute", "replay", "mixed"])
def test_forging_relayer_fixtures_sound(scenario_dir, mode):
    res = run(scenario_dir, f"relayer_forge_{mode}")
    assert res.report.sound and res.report.exit_code == 0
    if mode == "replay":
        assert res.report.discarded.get("Discarded:Replay", 0) > 0


def test_reorged_message_is_reproven_and_delivered_once(scenario_dir):
    res = run(scenario_dir, "honest_multi")
    assert res.log.of(Step.REORG) and res.log.of(Step.RETIRED)
    delivered = [r.tx for r in res.log.of(Step.DELIVERED)]
    assert len(delivered) == len(set(delivered)) == 6


def test_ratio_is_exact_fraction(scenario_dir):
    rep = run(scenario_dir, "honest_multi").report
    assert isinstance(rep.header_storage_ratio, Fraction)
    assert rep.header_storage_ratio == Fraction(rep.headers_stored, rep.message_blocks) <= 1


def test_reorg_past_genesis_is_rejected_not_fatal():
    cfg = parse_scenario(
        "[scenario]\nmax_ticks = 5\n[chain A]\nid = 1\n[chain B]\nid = 2\n[script]\n@0 reorg(A, depth=4)\n"
    )
    res = simulate(cfg)
    assert first(res.log, Step.REJECTED).get("reason") == "InvalidFork"


def test_text_report_ends_with_counters(scenario_dir):
    text = run(scenario_dir, "collusion").report.to_text()
    assert "sound: NO" in text and text.splitlines()[-1].startswith("counters={")


ints = st.one_of(st.none(), st.integers(0, 2**16))
extras = st.lists(st.tuples(st.from_regex(r"[a-z]{1,5}", fullmatch=True), st.from_regex(r"[0-9a-f:]{0,8}", fullmatch=True)), max_size=3)


@given(st.integers(0, 999), st.sampled_from(list(Step)), ints, ints, st.one_of(st.none(), st.binary(min_size=32, max_size=32)), ints, extras)
def test_event_line_round_trip(tick, tag, src, dst, tx, height, extra):
    rec = EventRecord(0, tick, tag, src, dst, tx, height, tuple(extra))
    assert EventRecord.from_line(rec.to_line()) == rec
