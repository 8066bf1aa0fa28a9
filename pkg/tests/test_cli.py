from __future__ import annotations

import json
from pathlib import Path

import pytest

from boltplan.cli import EXIT_CONFIG, EXIT_FAILURES, EXIT_OK, main

ROOT = Path(__file__).resolve().parents[1]
PROBLEMS = ROOT / "src" / "boltplan" / "data" / "problems"


def test_plan_prints_steps(capsys):
    assert main(["plan", str(PROBLEMS / "single_bolt.pddl")]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "(move_base r0 r1)" and out[7] == "(retract b0)"
    assert out[-1].startswith("; 8 steps")


def test_plan_bfs_and_noisy_agree_on_length(capsys):
    assert main(["plan", str(PROBLEMS / "obstacle_clear.pddl"), "--planner", "bfs"]) == EXIT_OK
    bfs = capsys.readouterr().out.splitlines()[-1]
    assert main(["--seed", "3", "plan", str(PROBLEMS / "obstacle_clear.pddl"), "--flip-rate", "0.1"]) == EXIT_OK
    noisy = capsys.readouterr().out.splitlines()[-1]
    assert bfs.split(",")[0] == noisy.split(",")[0]


def test_plan_not_found_exits_one(capsys):
    assert main(["plan", str(PROBLEMS / "single_bolt.pddl"), "--max-expansions", "2"]) == EXIT_FAILURES
    assert "no plan" in capsys.readouterr().out


def test_plan_bad_input_exits_two(tmp_path, capsys):
    bad = tmp_path / "bad.pddl"
    bad.write_text("(define (problem x)")
    assert main(["plan", str(bad)]) == EXIT_CONFIG
    assert main(["plan", str(tmp_path / "missing.pddl")]) == EXIT_CONFIG
    assert "error:" in capsys.readouterr().err


def test_run_and_report(tmp_path, capsys):
    records, table = tmp_path / "r.jsonl", tmp_path / "r.csv"
    code = main(["--config", str(ROOT / "configs" / "sleeve_replace.yaml"), "--seed", "2", "run", "--trials", "2",
                 "--records", str(records), "--table", str(table)])
    summary = json.loads(capsys.readouterr().out)
    assert summary["trials"] == 2 and summary["seed"] == 2
    assert code == (EXIT_OK if summary["success_rate"] == 1.0 else EXIT_FAILURES)
    assert len(table.read_text().splitlines()) == 3
    assert main(["report", str(records)]) == code
    assert json.loads(capsys.readouterr().out)["successes"] == summary["successes"]


def test_bad_config_exits_two(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("task: nope\n")
    assert main(["--config", str(cfg), "run"]) == EXIT_CONFIG
    assert main(["run", "--oracle", "noisy:7"]) == EXIT_CONFIG


def test_llm_oracle_without_credentials_exits_two(monkeypatch):
    for k in ("BOLTPLAN_LLM_URL", "BOLTPLAN_LLM_MODEL", "BOLTPLAN_LLM_API_KEY"):
        monkeypatch.delenv(k, raising=False)
    assert main(["run", "--task", "sleeve_replace", "--oracle", "llm"]) == EXIT_CONFIG


def test_bench_json(tmp_path, capsys):
    out = tmp_path / "b.json"
    assert main(["bench", "--n", "5", "--json", str(out)]) == EXIT_OK
    rows = json.loads(out.read_text())
    assert [r["method"] for r in rows] == ["random", "rpsn"]
    assert "method" in capsys.readouterr().out


def test_report_rejects_garbage(tmp_path):
    junk = tmp_path / "junk.jsonl"
    junk.write_text("not json\n")
    assert main(["report", str(junk)]) == EXIT_CONFIG


def test_unknown_command_is_a_usage_error():
    with pytest.raises(SystemExit) as e:
        main(["fly"])
    assert e.value.code == 2
