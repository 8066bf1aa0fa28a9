from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import pytest

from boltplan.harness import (
    FailureCategory,
    OracleConfig,
    ScenarioConfig,
    categorize,
    designated_area,
    emit_report,
    load_config,
    obstacle_order_ok,
    parse_report,
    read_report,
    report_records,
    run_task,
    run_trial,
    sleeve_order_ok,
    task_scene,
)
from boltplan.planner import ExecutionFailure
from boltplan.scene import ConfigError, FailureCause, FailureConfig, NoiseConfig, generate_scene

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
CLEAN = dict(noise=NoiseConfig.zero(), failures=FailureConfig(0.0))


@pytest.fixture(scope="module")
def small_report():
    return run_task(ScenarioConfig(task="sleeve_replace", seed=3, trials=3, **CLEAN))


# ---------------------------------------------------------------- configuration

@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_load(path):
    cfg = load_config(path)
    assert cfg.task == path.stem


@pytest.mark.parametrize("d", [
    {"task": "juggling"}, {"trials": 0}, {"replan_budget": -1}, {"width": 0}, {"threshold": 1.0},
    {"colour": "red"}, {"oracle": "psychic"}, {"oracle": "noisy:2"}, {"oracle": {"kind": "noisy", "seed": 1}},
    {"limits": {"max_breadth": 3}}, {"trials": "many"}, {"rpsn_weights": "/nonexistent/w.txt"},
    {"scene": {"bolt_count": -2}},
])
def test_invalid_configs_rejected(d):
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(d)


def test_config_dict_round_trip():
    cfg = load_config(CONFIGS / "continuous_15.yaml")
    assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "list.yaml"
    bad.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    broken = tmp_path / "broken.yaml"
    broken.write_text("task: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(broken)


def test_oracle_config_parse():
    assert OracleConfig.parse("noisy:0.25") == OracleConfig("noisy", 0.25)
    assert OracleConfig.parse(None) == OracleConfig()
    assert OracleConfig.parse({"kind": "llm"}).kind == "llm"


# ---------------------------------------------------------------- trials

def test_clean_continuous_run_succeeds():
    rep = run_task(ScenarioConfig(task="continuous_15", seed=0, trials=2, **CLEAN))
    assert rep.success_rate == 1.0
    for t in rep.trials:
        assert t.targets == t.removed == 15 and t.replans == 0
        assert t.speculation_attempts and all(a >= 1 for a in t.speculation_attempts)


def test_trials_are_reproducible():
    cfg = ScenarioConfig(task="obstacle_clear", seed=7, trials=1, noise=NoiseConfig(sigma_pos=2.0),
                         failures=FailureConfig(0.05))
    assert run_trial(cfg, 0) == run_trial(cfg, 0)


def test_sleeve_task_orders_the_change_first(small_report):
    assert small_report.success_rate == 1.0
    assert all(t.order_ok for t in small_report.trials)


def test_designated_area_splits_bolts_cleanly():
    cfg = ScenarioConfig(task="designated_area", seed=2)
    sc = task_scene(cfg)
    world = generate_scene(sc, 11)
    area = designated_area(sc, world)
    inside = [b for b in world.bolts if area[0] <= b.pose.p[0] <= area[1]]
    assert 0 < len(inside) < len(world.bolts)
    assert all(abs(b.pose.p[0] - area[1]) > 1.0 for b in world.bolts)


def test_exhausted_budget_is_categorized():
    cfg = ScenarioConfig(task="sleeve_replace", seed=0, trials=1, noise=NoiseConfig.zero(),
                         failures=FailureConfig(0.0, {"engage": 1.0}), replan_budget=1)
    t = run_trial(cfg, 0)
    assert not t.success and t.cause == FailureCategory.INJECTED_FAULT.value
    assert "engage" in t.detail


# ---------------------------------------------------------------- ordering checks and causes

def test_sleeve_order_ok():
    assert sleeve_order_ok(["(change_sleeve s0 s1)", "(engage b0)"])
    assert not sleeve_order_ok(["(engage b0)", "(change_sleeve s0 s1)"])
    assert not sleeve_order_ok(["(mate b0)", "(engage b0)"])
    assert sleeve_order_ok(["(mate b0)"])


def test_obstacle_order_ok():
    pushed = ["(push_obstacle b1 r0)", "(mate b1)"]
    assert obstacle_order_ok(pushed, ["b1"])
    assert not obstacle_order_ok(["(mate b1)", "(push_obstacle b1 r0)"], ["b1"])
    assert obstacle_order_ok(["(mate b0)"], ["b1"])


@pytest.mark.parametrize("failure,cause,action,expected", [
    (ExecutionFailure.BOLT_LOST, None, None, FailureCategory.POSE_ESTIMATION),
    (ExecutionFailure.NO_PLAN, None, None, FailureCategory.PLANNING),
    (ExecutionFailure.STEP_LIMIT, None, None, FailureCategory.STEP_LIMIT),
    (ExecutionFailure.REPLAN_BUDGET, None, None, FailureCategory.PERCEPTION),
    (ExecutionFailure.REPLAN_BUDGET, FailureCause.UNREACHABLE.value, "(move_base r0 r1)", FailureCategory.POSITIONING),
    (ExecutionFailure.REPLAN_BUDGET, FailureCause.UNREACHABLE.value, "(approach b0 r1)", FailureCategory.ARM_REACH),
    (ExecutionFailure.REPLAN_BUDGET, FailureCause.MISALIGNED.value, "(mate b0)", FailureCategory.ALIGNMENT),
    (ExecutionFailure.REPLAN_BUDGET, FailureCause.NO_SLEEVE.value, "(change_sleeve s0 s1)", FailureCategory.SLEEVE),
])
def test_categorize(failure, cause, action, expected):
    assert categorize(failure, cause, action) == expected


def test_every_primitive_cause_has_a_category():
    for c in FailureCause:
        assert isinstance(categorize(ExecutionFailure.REPLAN_BUDGET, c.value, "(mate b0)"), FailureCategory)


# ---------------------------------------------------------------- reports

def test_report_is_byte_stable(small_report, tmp_path):
    again = run_task(ScenarioConfig(task="sleeve_replace", seed=3, trials=3, **CLEAN))
    a = emit_report(small_report, "records", tmp_path / "a.jsonl").read_bytes()
    b = emit_report(again, "records", tmp_path / "b.jsonl").read_bytes()
    assert a == b
    assert emit_report(small_report, "table", tmp_path / "a.csv").read_bytes() == \
        emit_report(again, "table", tmp_path / "b.csv").read_bytes()


def test_report_rows_and_round_trip(small_report, tmp_path):
    path = emit_report(small_report, "records", tmp_path / "r.jsonl")
    lines = path.read_text().splitlines()
    assert len(lines) == 1 + len(small_report.trials)
    assert json.loads(lines[0])["success_rate"] == small_report.success_rate
    assert read_report(path) == small_report
    table = emit_report(small_report, "table", tmp_path / "r.csv").read_text().splitlines()
    assert len(table) == 1 + len(small_report.trials)


def test_report_errors(small_report, tmp_path):
    with pytest.raises(ValueError):
        emit_report(small_report, "xml", tmp_path / "r.xml")
    with pytest.raises(ValueError):
        parse_report("")
    with pytest.raises(ValueError):
        parse_report('{"schema": "other"}\n')
    text = report_records(small_report).replace('"version": 1', '"version": 99')
    with pytest.raises(ValueError, match="version"):
        parse_report(text)


def test_run_log_appends(tmp_path):
    log = tmp_path / "run.jsonl"
    cfg = ScenarioConfig(task="sleeve_replace", seed=1, trials=1, run_log=str(log), **CLEAN)
    run_task(cfg)
    first = log.read_text().splitlines()
    run_task(cfg)
    second = log.read_text().splitlines()
    assert len(second) == 2 * len(first)
    kinds = {json.loads(x)["kind"] for x in first}
    assert kinds == {"trial", "predicate_sample"}


def test_with_replaced_fields_still_validates():
    cfg = replace(ScenarioConfig(), trials=4)
    assert cfg.validate().trials == 4
