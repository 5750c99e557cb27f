import os
import subprocess
import sys

import pytest

from omnirelay.cli import main
from omnirelay.scenario import load_scenario

NO_SEED = """[scenario]
name = unseeded
max_ticks = 25

[chain A]
id = 1
confirmation_depth = 3

[chain B]
id = 2
confirmation_depth = 3

[script]
@0 send(A, B, to=0x1111111111111111111111111111111111111111, payload=0x01)
"""


def fixtures(scenario_dir):
    return sorted(scenario_dir.glob("*.scn"))


def test_every_fixture_exits_as_declared(scenario_dir, capsys):
    for path in fixtures(scenario_dir):
        assert main(["run", "-q", str(path)]) == load_scenario(path).expect_exit, path.name


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.scn"
    bad.write_text("[scenario]\nmax_ticks = -1\n")
    assert main(["run", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "scenario.max_ticks" in err and "at least one [chain" in err
    assert main(["run", str(tmp_path / "missing.scn")]) == 1


def _log(tmp_path, *args, env=None):
    out = tmp_path / f"log{len(list(tmp_path.iterdir()))}.txt"
    full_env = {k: v for k, v in os.environ.items() if k != "OMNIRELAY_SEED"}
    full_env.update(env or {})
    subprocess.run([sys.executable, "-m", "omnirelay", "run", "-q", *args, "--log-out", str(out)], check=True, env=full_env)
    return out.read_text()


def test_seed_precedence(tmp_path):
    unseeded = tmp_path / "u.scn"
    unseeded.write_text(NO_SEED)
    seeded = tmp_path / "s.scn"
    seeded.write_text(NO_SEED.replace("max_ticks", "seed = 5\nmax_ticks"))
    base = _log(tmp_path, str(unseeded))
    via_env = _log(tmp_path, str(unseeded), env={"OMNIRELAY_SEED": "5"})
    via_flag = _log(tmp_path, str(unseeded), "--seed", "5")
    assert via_env == via_flag != base
    assert _log(tmp_path, str(seeded), env={"OMNIRELAY_SEED": "6"}) == via_flag
    assert _log(tmp_path, str(seeded), "--seed", "0", env={"OMNIRELAY_SEED": "6"}) == base


def test_verify_proof_round_trip(scenario_dir, tmp_path, capsys):
    out = tmp_path / "proofs"
    assert main(["run", "-q", str(scenario_dir / "honest_single.scn"), "--proofs-out", str(out)]) == 0
    proof, root = out / "m0.proof", (out / "m0.root").read_text().strip()
    assert main(["verify-proof", str(proof), root]) == 0
    assert main(["verify-proof", str(proof), "00" * 32]) == 2
    tampered = tmp_path / "t.proof"
    data = bytearray(proof.read_bytes())
    data[-1] ^= 1
    tampered.write_bytes(bytes(data))
    assert main(["verify-proof", str(tampered), root]) == 2
    tampered.write_bytes(b"\x02")
    assert main(["verify-proof", str(tampered), root]) == 2
    assert main(["verify-proof", str(tmp_path / "nope"), root]) == 1
    assert main(["verify-proof", str(proof), "zz"]) == 1


def test_list_scenarios(scenario_dir, capsys):
    assert main(["list-scenarios", str(scenario_dir)]) == 0
    out = capsys.readouterr().out
    assert "collusion.scn: collusion expect_exit=2" in out


def test_audit_out_and_report(scenario_dir, tmp_path, capsys):
    audit = tmp_path / "audit.txt"
    assert main(["run", str(scenario_dir / "collusion.scn"), "--audit-out", str(audit)]) == 2
    assert audit.read_text() == capsys.readouterr().out
    assert "UncommittedTransaction" in audit.read_text()


@pytest.mark.parametrize("argv", [[], ["bogus"]])
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 1
