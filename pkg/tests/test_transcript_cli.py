import json

import pytest
from click.testing import CliRunner

from redchain.cli import main, parse_config_file
from redchain.model import ConfigurationError, StopReason
from redchain.transcript import (
    EventKind,
    LogicalClock,
    Transcript,
    TranscriptError,
    WallClock,
)


def sample_transcript():
    t = Transcript(campaign_id="t1", config={"agent_ip": "1.2.3.4"}, mode="autonomous")
    t.add_event(EventKind.PROMPT_COMPOSED, 0, {"stage": "execution"})
    t.add_event(EventKind.MODEL_RESPONDED, 0, {"response": "1) nmap"})
    t.add_event(EventKind.CAMPAIGN_STOPPED, 0, {"stop_reason": "MAX_ACTIONS"})
    t.finalize(StopReason.MAX_ACTIONS)
    return t


def test_round_trip_is_byte_identical():
    text = sample_transcript().to_jsonl()
    again = Transcript.from_jsonl(text)
    assert again.to_jsonl() == text
    assert again.stop_reason is StopReason.MAX_ACTIONS
    assert [e.kind for e in again.events] == [
        EventKind.PROMPT_COMPOSED, EventKind.MODEL_RESPONDED, EventKind.CAMPAIGN_STOPPED,
    ]


def test_logical_clock_is_deterministic_and_monotonic():
    a, b = LogicalClock(), LogicalClock()
    assert [a.now_ms() for _ in range(5)] == [b.now_ms() for _ in range(5)] == [0, 1, 2, 3, 4]
    assert isinstance(WallClock().now_ms(), int)


def test_sequence_numbers_are_dense_from_zero():
    t = sample_transcript()
    assert [e.seq for e in t.events] == [0, 1, 2]


def test_truncated_transcript_rejected():
    lines = sample_transcript().to_jsonl().splitlines()
    with pytest.raises(TranscriptError, match="no final record"):
        Transcript.from_jsonl("\n".join(lines[:-1]))


def test_tampered_event_order_rejected():
    lines = sample_transcript().to_jsonl().splitlines()
    lines[1], lines[2] = lines[2], lines[1]
    with pytest.raises(TranscriptError, match="breaks total order"):
        Transcript.from_jsonl("\n".join(lines))


def test_bad_json_names_the_line():
    lines = sample_transcript().to_jsonl().splitlines()
    lines[2] = "{corrupt"
    with pytest.raises(TranscriptError, match="line 3"):
        Transcript.from_jsonl("\n".join(lines))


def test_unsupported_schema_version_rejected():
    lines = sample_transcript().to_jsonl().splitlines()
    header = json.loads(lines[0])
    header["schema_version"] = 999
    lines[0] = json.dumps(header)
    with pytest.raises(TranscriptError, match="schema version"):
        Transcript.from_jsonl("\n".join(lines))


def test_missing_header_rejected():
    with pytest.raises(TranscriptError):
        Transcript.from_jsonl("")
    with pytest.raises(TranscriptError, match="header"):
        Transcript.from_jsonl('{"record": "event", "seq": 0}')


# --- config file parsing ------------------------------------------------------


def test_parse_config_file_types(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text(
        "# comment\nagent_ip = 10.0.0.1\nmax_actions = 5\ntemperature = 0.5\n",
        encoding="utf-8",
    )
    values = parse_config_file(str(path))
    assert values == {"agent_ip": "10.0.0.1", "max_actions": 5, "temperature": 0.5}


def test_parse_config_file_errors_name_path_and_line(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("agent_ip = 10.0.0.1\nbogus_key = 1\n", encoding="utf-8")
    with pytest.raises(ConfigurationError, match=r"c\.cfg:2"):
        parse_config_file(str(path))
    path.write_text("just a line\n", encoding="utf-8")
    with pytest.raises(ConfigurationError, match="key = value"):
        parse_config_file(str(path))


# --- CLI ------------------------------------------------------------------------


runner = CliRunner()


def test_cli_run_demo_exits_zero_and_writes_transcript(tmp_path):
    out = tmp_path / "demo.jsonl"
    result = runner.invoke(main, ["run", "--config", "demo", "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "stopped: END_OF_CAMPAIGN" in result.output
    transcript = Transcript.read(str(out))
    assert len(transcript.steps()) == 3


def test_cli_run_twice_byte_identical(tmp_path):
    outs = []
    for name in ("a.jsonl", "b.jsonl"):
        out = tmp_path / name
        assert runner.invoke(main, ["run", "--out", str(out)]).exit_code == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_cli_run_missing_scenario_names_path(tmp_path):
    result = runner.invoke(main, ["run", "--scenario", "no-such-scenario"])
    assert result.exit_code == 2
    assert "no-such-scenario" in result.output


def test_cli_run_missing_script_errors(tmp_path):
    result = runner.invoke(main, ["run", "--script", "/nope/missing.jsonl"])
    assert result.exit_code == 2
    assert "missing.jsonl" in result.output


def test_cli_run_nonzero_exit_for_other_stop_reasons(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(
        "agent_ip = 172.16.2.2\ntarget_ip = 172.16.2.3\nmax_actions = 0\n",
        encoding="utf-8",
    )
    result = runner.invoke(main, ["run", "--config", str(cfg)])
    assert result.exit_code == 1
    assert "MAX_ACTIONS" in result.output


def test_cli_eval_reports_errors_but_continues(tmp_path):
    result = runner.invoke(
        main,
        ["eval", "--scenario", "single-vsftpd-2.3.4", "--scenario", "bogus",
         "--script", "demo", "--trials", "2", "--csv"],
    )
    assert "single-vsftpd-2.3.4,2,0,0,0,1" in result.output
    assert "bogus,ERROR" in result.output


def test_cli_eval_writes_report_file(tmp_path):
    out = tmp_path / "report.csv"
    result = runner.invoke(
        main,
        ["eval", "--scenario", "no-ports", "--script", "noports-recon",
         "--trials", "2", "--csv", "--out", str(out)],
    )
    assert result.exit_code == 0
    assert "no-ports,0,2,0,0,0" in out.read_text()


def test_cli_ablate_table():
    result = runner.invoke(main, ["ablate", "--csv"])
    assert result.exit_code == 0
    lines = result.output.strip().splitlines()
    assert len(lines) == 6  # header + 5 variants
    assert "STOP" in lines[-1]


def test_cli_replay_renders_tactics(tmp_path):
    out = tmp_path / "demo.jsonl"
    runner.invoke(main, ["run", "--out", str(out)])
    result = runner.invoke(main, ["replay", str(out)])
    assert result.exit_code == 0
    for tactic in ("RECON", "EXPLOIT", "EXFILTRATION"):
        assert f"[{tactic}]" in result.output
    assert "stopped: END_OF_CAMPAIGN" in result.output


def test_cli_replay_rejects_tampered_transcript(tmp_path):
    out = tmp_path / "demo.jsonl"
    runner.invoke(main, ["run", "--out", str(out)])
    lines = out.read_text().splitlines()
    lines[1], lines[2] = lines[2], lines[1]
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(lines), encoding="utf-8")
    result = runner.invoke(main, ["replay", str(bad)])
    assert result.exit_code == 2
    assert "total order" in result.output


def test_cli_scenarios_lists_builtins():
    result = runner.invoke(main, ["scenarios"])
    assert "metasploitable-like" in result.output
    assert "no-ports" in result.output
    assert "single-vsftpd-2.3.4" in result.output
