"""End-to-end runs: scenario file parsing, the scripted failure matrix,
determinism of traces, the ceremony walkthrough, and the CLI."""

import json
import pathlib

import pytest

from bsa_sim.cli import main
from bsa_sim.harness import (
    ceremony_demo,
    extra_scenarios,
    matrix_scenarios,
    run_scenario,
)
from bsa_sim.scenario import ScenarioError, load_scenario, parse_scenario

SCENARIO_DIR = pathlib.Path(__file__).resolve().parent.parent / "scenarios"
SCENARIO_FILES = sorted(SCENARIO_DIR.glob("*.scn"))


def test_scenario_files_present():
    assert [p.name for p in SCENARIO_FILES] == [
        "honest_exit.scn",
        "legitimate_rebalance.scn",
        "theft_defeated.scn",
    ]


def test_parse_honest_exit_file():
    config = load_scenario(str(SCENARIO_DIR / "honest_exit.scn"))
    assert config.name == "honest-exit"
    assert (config.t1, config.t2, config.t3) == (6, 10, 1200)
    assert config.amounts == [10000]
    assert config.depositor.exit_at == 10
    assert config.depositor.burn_before_exit
    assert config.expected_verdicts == (True, True, True)


def test_parse_oracle_sections_and_optionals():
    config = load_scenario(str(SCENARIO_DIR / "theft_defeated.scn"))
    assert not config.depositor.burn_before_exit
    assert config.oracles[0].offline == (8, 22)
    text = """
    [params]
    dest_halted_at = none
    fee_steps = 6:4, 9:1
    [operator]
    challenge_thefts = no
    [oracle.0]
    refuse = yes
    """
    parsed = parse_scenario(text)
    assert parsed.dest_halted_at is None
    assert parsed.fee_steps == [(6, 4), (9, 1)]
    assert not parsed.operator.challenge_thefts
    assert parsed.oracles[0].refuse_resolutions


def test_parse_rejections():
    with pytest.raises(ScenarioError):
        parse_scenario("[deposit]\namounts = 10, -3\n")
    with pytest.raises(ScenarioError):
        parse_scenario("[operator]\nclaim_expired = maybe\n")
    with pytest.raises(ScenarioError):
        parse_scenario("not an ini file [")


@pytest.mark.parametrize("path", SCENARIO_FILES, ids=lambda p: p.stem)
def test_scenario_file_runs_as_graded(path):
    config = load_scenario(str(path))
    result = run_scenario(config)
    assert result.verdicts.triple() == config.expected_verdicts, result.verdicts.reasons


def test_matrix_row_catalog():
    rows = matrix_scenarios()
    assert [r.name for r in rows] == [
        "one-oracle-offline",
        "all-oracles-offline-honest-operator",
        "all-oracles-offline-malicious-operator",
        "oracle-key-leak",
        "operator-no-consensus",
        "operator-no-consensus-oracles-offline",
        "corrupted-operator-oracles-correct",
        "corrupted-operator-oracles-offline",
    ]
    patterns = [
        "".join("Y" if v else "N" for v in r.expected_verdicts) for r in rows
    ]
    assert patterns == ["YYY", "YYY", "NYN", "YNN", "YNN", "YNN", "YNN", "NNN"]


def test_extra_scenarios_run_as_graded():
    for config in extra_scenarios():
        config.signature_scheme = "mock"
        result = run_scenario(config)
        assert result.verdicts.triple() == config.expected_verdicts, (
            config.name,
            result.verdicts.reasons,
        )


def test_failed_verdicts_carry_reasons():
    config = next(
        c for c in matrix_scenarios() if c.name == "corrupted-operator-oracles-offline"
    )
    config.signature_scheme = "mock"
    result = run_scenario(config)
    assert result.verdicts.triple() == (False, False, False)
    assert result.verdicts.reasons
    assert all(isinstance(reason, str) and reason for reason in result.verdicts.reasons)


def test_runs_are_deterministic():
    first = load_scenario(str(SCENARIO_DIR / "honest_exit.scn"))
    second = load_scenario(str(SCENARIO_DIR / "honest_exit.scn"))
    first.signature_scheme = second.signature_scheme = "mock"
    a = run_scenario(first)
    b = run_scenario(second)
    c = run_scenario(second)  # same config object reused
    assert a.trace_digest == b.trace_digest == c.trace_digest
    assert a.snapshot_digest == b.snapshot_digest == c.snapshot_digest
    assert a.final_height == b.final_height == c.final_height
    assert a.trace == b.trace


def test_ceremony_demo_narrative():
    lines = ceremony_demo()
    assert lines[0] == "honest ceremony"
    assert any(line.startswith("  funding txid: ") for line in lines)
    kinds = {line.split()[0] for line in lines if line.startswith("  ") and len(line.split()) == 2}
    assert {"VA", "UTA", "UCA", "RCA"} <= kinds
    assert "  tokens minted to alice: 13000" in lines
    assert "tampered ceremony (registry swaps one stored row)" in lines
    assert lines[-1].startswith("  rejected before funding: ")
    assert not any("ERROR" in line for line in lines)


# -- command line -------------------------------------------------------------


def test_cli_run_graded_ok(capsys):
    code = main(["run", str(SCENARIO_DIR / "honest_exit.scn")])
    out = capsys.readouterr().out
    assert code == 0
    assert "scenario: honest-exit" in out
    assert "expected verdicts matched (Y/Y/Y)" in out


def test_cli_run_mismatch_exits_nonzero(tmp_path, capsys):
    text = (SCENARIO_DIR / "honest_exit.scn").read_text()
    text = text.replace("protocol_safe = true", "protocol_safe = false")
    text = text.replace("[params]", "[params]\nsignature_scheme = mock")
    path = tmp_path / "wrong.scn"
    path.write_text(text)
    code = main(["run", str(path)])
    out = capsys.readouterr().out
    assert code == 1
    assert "MISMATCH: expected Y/Y/N, got Y/Y/Y" in out


def test_cli_run_trace_prints_json_lines(tmp_path, capsys):
    text = (SCENARIO_DIR / "honest_exit.scn").read_text()
    text = text.replace("[params]", "[params]\nsignature_scheme = mock")
    path = tmp_path / "fast.scn"
    path.write_text(text)
    code = main(["run", "--trace", str(path)])
    out = capsys.readouterr().out
    assert code == 0
    events = [json.loads(line) for line in out.splitlines() if line.startswith("{")]
    assert any(e.get("action") == "exit_complete" for e in events)
    assert any(e.get("action") == "block" for e in events)


def test_cli_matrix_all_rows_match(capsys):
    code = main(["matrix"])
    out = capsys.readouterr().out
    assert code == 0
    assert "8/8 rows matched" in out
    assert "MISMATCH" not in out


def test_cli_avail_prints_report(capsys):
    code = main(
        [
            "avail",
            "--t1", "24", "--t2", "48", "--t3", "720",
            "--t-op", "1", "--t-check", "4", "--wsp", "1344",
        ]
    )
    out = capsys.readouterr().out
    assert code == 0
    assert "challenge-response uptime bound: 0.934722" in out
    assert "required uptime:                 0.934722" in out


def test_cli_ceremony_demo(capsys):
    code = main(["ceremony", "--demo"])
    out = capsys.readouterr().out
    assert code == 0
    assert "honest ceremony" in out
    assert "rejected before funding" in out
