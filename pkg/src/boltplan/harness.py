"""Scenario runs for the four disassembly tasks, with their reports and the speculation benchmark."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from collections import Counter
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .estimation import MateConfig, mate_loop
from .fixtures import problem_from_world
from .pddl import Goal, ground, load_shipped_domain
from .perception import binarize, default_params, load_params, snapshot
from .planner import ExecutionFailure, SearchLimits, execute_with_verification, heuristic_plan
from .scene import (
    ConfigError,
    FailureCause,
    FailureConfig,
    Fastening,
    NoiseConfig,
    SceneConfig,
    SceneRunner,
    generate_scene,
    look_at,
)

log = logging.getLogger(__name__)

REPORT_SCHEMA = "boltplan-report"
REPORT_VERSION = 1
TASK_KINDS = ("sleeve_replace", "obstacle_clear", "continuous_15", "designated_area")


class FailureCategory(str, Enum):
    """Why a trial failed; every value traces back to one failed operation."""

    POSITIONING = "positioning"  # no verified chassis station
    ARM_REACH = "arm_reach"  # no IK for an arm motion
    POSE_ESTIMATION = "pose_estimation"  # target lost during the mate loop
    ALIGNMENT = "alignment"  # mate outside tolerance
    SLEEVE = "sleeve"  # wrong or missing sleeve
    ENGAGEMENT = "engagement"  # rotate/extract without an engaged sleeve
    RETENTION = "retention"  # magnetic bolt not held
    PRECONDITION = "precondition"  # primitive run against a false physical precondition
    INJECTED_FAULT = "injected_fault"  # failure injection fired
    PERCEPTION = "perception"  # perceived state disagreed with prediction, no primitive failed
    PLANNING = "planning"  # no plan within limits
    STEP_LIMIT = "step_limit"
    WRONG_TARGET = "wrong_target"  # a bolt outside the task's target set was removed


_CAUSE_CATEGORY = {
    FailureCause.PRECONDITION: FailureCategory.PRECONDITION,
    FailureCause.NOT_ENGAGED: FailureCategory.ENGAGEMENT,
    FailureCause.INJECTED: FailureCategory.INJECTED_FAULT,
    FailureCause.UNREACHABLE: FailureCategory.ARM_REACH,
    FailureCause.MISALIGNED: FailureCategory.ALIGNMENT,
    FailureCause.SLEEVE_MISMATCH: FailureCategory.SLEEVE,
    FailureCause.NOT_RETAINED: FailureCategory.RETENTION,
    FailureCause.NO_SLEEVE: FailureCategory.SLEEVE,
}


def categorize(failure: ExecutionFailure | None, last_cause: str | None, last_action: str | None) -> FailureCategory:
    if failure == ExecutionFailure.BOLT_LOST:
        return FailureCategory.POSE_ESTIMATION
    if failure == ExecutionFailure.NO_PLAN:
        return FailureCategory.PLANNING
    if failure == ExecutionFailure.STEP_LIMIT:
        return FailureCategory.STEP_LIMIT
    if last_cause is None:
        return FailureCategory.PERCEPTION
    cause = FailureCause(last_cause)
    if cause == FailureCause.UNREACHABLE and last_action and last_action.startswith("(move_base"):
        return FailureCategory.POSITIONING
    return _CAUSE_CATEGORY[cause]


# ---------------------------------------------------------------- configuration

@dataclass(frozen=True)
class OracleConfig:
    kind: str = "symbolic"  # symbolic | noisy | llm
    flip_rate: float = 0.0

    @classmethod
    def parse(cls, value: Any) -> OracleConfig:
        if value is None:
            return cls()
        if isinstance(value, str):
            kind, _, rest = value.partition(":")
            return cls(kind, float(rest) if rest else 0.0).validated()
        d = dict(value)
        unknown = set(d) - {"kind", "flip_rate"}
        if unknown:
            raise ConfigError(f"unknown oracle keys: {sorted(unknown)}")
        return cls(str(d.get("kind", "symbolic")), float(d.get("flip_rate", 0.0))).validated()

    def validated(self) -> OracleConfig:
        if self.kind not in ("symbolic", "noisy", "llm"):
            raise ConfigError(f"unknown oracle kind {self.kind!r}")
        if not 0.0 <= self.flip_rate <= 1.0:
            raise ConfigError("flip_rate must lie in [0, 1]")
        return self


@dataclass(frozen=True)
class ScenarioConfig:
    task: str = "continuous_15"
    seed: int = 0
    trials: int = 1
    noise: NoiseConfig = NoiseConfig()
    failures: FailureConfig = FailureConfig()
    oracle: OracleConfig = OracleConfig()
    limits: SearchLimits = SearchLimits()
    replan_budget: int = 5
    width: int = 5
    mate: MateConfig = MateConfig()
    speculation_attempts: int = 20
    rpsn_weights: str | None = None  # None: shipped weights
    predicate_params: str | None = None  # None: shipped classifiers
    threshold: float = 0.5
    scene: dict = field(default_factory=dict)  # overrides for the task's scene layout
    run_log: str | None = None

    def validate(self) -> ScenarioConfig:
        if self.task not in TASK_KINDS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASK_KINDS}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.replan_budget < 0 or self.width < 1 or self.speculation_attempts < 1:
            raise ConfigError("replan_budget >= 0, width >= 1 and speculation_attempts >= 1 required")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must lie in (0, 1)")
        for p in (self.rpsn_weights, self.predicate_params):
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"weight file not found: {p}")
        task_scene(self)  # surfaces bad scene overrides now rather than mid-run
        return self

    @classmethod
    def from_dict(cls, d: dict | None) -> ScenarioConfig:
        d = dict(d or {})
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "noise" in d:
                d["noise"] = NoiseConfig.from_dict(d["noise"])
            if "failures" in d:
                d["failures"] = FailureConfig.from_dict(d["failures"])
            if "oracle" in d:
                d["oracle"] = OracleConfig.parse(d["oracle"])
            if "limits" in d:
                lim = dict(d["limits"])
                bad = set(lim) - {"max_depth", "max_expansions"}
                if bad:
                    raise ConfigError(f"unknown limits keys: {sorted(bad)}")
                d["limits"] = SearchLimits(**{k: int(v) for k, v in lim.items()})
            if "mate" in d:
                d["mate"] = MateConfig.from_dict(d["mate"])
            for k in ("seed", "trials", "replan_budget", "width", "speculation_attempts"):
                if k in d:
                    d[k] = int(d[k])
            if "threshold" in d:
                d["threshold"] = float(d["threshold"])
            return cls(**d).validate()
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e)) from e

    def to_dict(self) -> dict:
        return {
            "task": self.task, "seed": self.seed, "trials": self.trials,
            "noise": asdict(self.noise), "failures": {"default_rate": self.failures.default_rate,
                                                      "rates": dict(self.failures.rates)},
            "oracle": asdict(self.oracle), "limits": asdict(self.limits), "replan_budget": self.replan_budget,
            "width": self.width, "mate": asdict(self.mate), "speculation_attempts": self.speculation_attempts,
            "rpsn_weights": self.rpsn_weights, "predicate_params": self.predicate_params,
            "threshold": self.threshold, "scene": dict(self.scene), "run_log": self.run_log,
        }


def load_config(path: str | Path) -> ScenarioConfig:
    import yaml

    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: {e}") from e
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return ScenarioConfig.from_dict(data)


# ---------------------------------------------------------------- scenarios

_TASK_SCENES = {
    "sleeve_replace": dict(layout="row", bolt_count=3, spacing_mm=80.0, mounted="mismatch_first", p_magnetic=0.3,
                           heads=("hex_external:10", "hex_external:13", "hex_internal:6")),
    "obstacle_clear": dict(layout="row", bolt_count=3, spacing_mm=80.0, obstructed=(1,), p_magnetic=0.3),
    "continuous_15": dict(layout="row", bolt_count=15, spacing_mm=35.0),
    "designated_area": dict(layout="scatter", bolt_count=6, spacing_mm=70.0, scatter_extent_mm=400.0,
                            p_magnetic=0.3, heads=("hex_external:10", "torx:25")),
}
AREA_MARGIN_MM = 50.0


def task_scene(config: ScenarioConfig) -> SceneConfig:
    base = dict(_TASK_SCENES[config.task])
    base.update(config.scene)
    sc = SceneConfig.from_dict(base)
    sc.validate()
    return sc


def designated_area(scene: SceneConfig, world=None) -> tuple[float, float, float, float]:
    """(xmin, xmax, ymin, ymax) of the region to clear.

    The cut runs through the widest gap between neighbouring bolt x-coordinates in the
    middle half of the field, so no bolt sits on the boundary.
    """
    ox, oy, _ = scene.origin
    ext = scene.scatter_extent_mm
    cut = ox + ext / 2
    if world is not None and len(world.bolts) > 1:
        xs = sorted(float(b.pose.p[0]) for b in world.bolts)
        gaps = [(b - a, (a + b) / 2) for a, b in zip(xs, xs[1:]) if ox + ext / 4 <= (a + b) / 2 <= ox + 3 * ext / 4]
        if gaps:
            cut = max(gaps)[1]
    return (ox - AREA_MARGIN_MM, cut, oy - AREA_MARGIN_MM, oy + ext + AREA_MARGIN_MM)


def _in_area(p, area) -> bool:
    return area[0] <= p[0] <= area[1] and area[2] <= p[1] <= area[3]


def trial_seeds(seed: int, trial: int) -> tuple[int, np.random.Generator, np.random.Generator]:
    ss = np.random.SeedSequence([seed, trial])
    scene_ss, run_ss, oracle_ss = ss.spawn(3)
    return int(scene_ss.generate_state(1)[0]), np.random.default_rng(run_ss), np.random.default_rng(oracle_ss)


@lru_cache(maxsize=4)
def _rpsn_params(path: str | None):
    from .rpsn import MlpParameters

    if path is None:
        return MlpParameters.load(str(resources.files("boltplan.data").joinpath("rpsn_default.txt")))
    return MlpParameters.load(path)


def make_oracle(config: OracleConfig, rng: np.random.Generator):
    from .oracle import SymbolicOracle, noisy_wrap

    if config.kind == "symbolic":
        return SymbolicOracle()
    if config.kind == "noisy":
        return noisy_wrap(SymbolicOracle(), config.flip_rate, rng)
    from .oracle.llm import LlmOracle

    return LlmOracle.from_env()


# ---------------------------------------------------------------- trials

@dataclass
class TrialRecord:
    trial: int
    scene_seed: int
    success: bool
    cause: str | None = None
    detail: str = ""
    targets: int = 0
    removed: int = 0
    steps: int = 0
    replans: int = 0
    expansions: int = 0
    speculation_attempts: list[int] = field(default_factory=list)
    mate_iterations: list[int] = field(default_factory=list)
    order_ok: bool | None = None
    actions: list[str] = field(default_factory=list)


def action_name(s: str) -> tuple[str, tuple[str, ...]]:
    parts = s.strip("()").split()
    return parts[0], tuple(parts[1:])


def sleeve_order_ok(actions: list[str]) -> bool:
    """A sleeve change happens before the first engage."""
    names = [action_name(a)[0] for a in actions]
    if "engage" not in names:
        return True
    return "change_sleeve" in names and names.index("change_sleeve") < names.index("engage")


def obstacle_order_ok(actions: list[str], blocked: list[str]) -> bool:
    """Every blocked bolt is pushed clear before it is mated."""
    parsed = [action_name(a) for a in actions]
    for b in blocked:
        mates = [i for i, (n, args) in enumerate(parsed) if n == "mate" and args[0] == b]
        if not mates:
            continue
        pushes = [i for i, (n, args) in enumerate(parsed) if n == "push_obstacle" and args[0] == b]
        if not pushes or pushes[0] > mates[0]:
            return False
    return True


def _discovered(runner: SceneRunner) -> list[str]:
    return sorted(runner.belief, key=lambda s: (len(s), s))


def run_trial(config: ScenarioConfig, trial: int, sample_sink: list | None = None) -> TrialRecord:
    scene_cfg = task_scene(config)
    scene_seed, rng, oracle_rng = trial_seeds(config.seed, trial)
    world = generate_scene(scene_cfg, scene_seed)
    rec = TrialRecord(trial, scene_seed, False)
    if not world.bolts:
        rec.success = True
        return rec
    params = _rpsn_params(config.rpsn_weights)
    pred_params = load_params(config.predicate_params) if config.predicate_params else default_params()
    oracle = make_oracle(config.oracle, oracle_rng)

    from .rpsn import speculate

    def station_fn(pose, r):
        return speculate(params, pose, config.speculation_attempts, r)

    known = None
    if config.task == "continuous_15":
        # Only the first bolt's pose is handed over; the rest are found by looking.
        known = {world.bolts[0].id: world.bolts[0].pose}
    area = designated_area(scene_cfg, world) if config.task == "designated_area" else None
    if area is not None:
        ox, oy, oz = scene_cfg.origin
        centre = ((ox + area[1]) / 2, oy + scene_cfg.scatter_extent_mm / 2, oz)
        world = look_at(world, centre)
    runner = SceneRunner(world, config.noise, rng, config.failures, station_fn, known)
    obs = runner.observe()
    blocked = [world.bolts[i].id for i in scene_cfg.obstructed]

    def perceive(o):
        return binarize(snapshot(o, params=pred_params), config.threshold)

    def targets() -> list[str]:
        ids = _discovered(runner)
        if area is not None:
            ids = [b for b in ids if _in_area(runner.belief[b].p, area)]
        return ids

    domain = load_shipped_domain()
    done: set[str] = set()
    failed = False
    while not failed:
        pending = [b for b in targets() if b not in done]
        if not pending:
            break
        b = pending[0]
        done.add(b)
        if b not in obs.visible_ids:
            runner.look_at_bolt(b)
            obs = runner.observe()
        state = perceive(obs)
        goal = Goal(frozenset({("removed", b), ("arm_home",)}))
        problem = problem_from_world(runner.world, state, [b], goal, name=f"remove-{b}")
        acts = ground(domain, problem)
        plan = heuristic_plan(problem.init, goal, acts, oracle, config.limits, config.width)
        rec.expansions += plan.expansions
        if not plan:
            rec.cause = FailureCategory.PLANNING.value
            rec.detail = f"{b}: initial plan {plan.reason}"
            failed = True
            break
        trace = execute_with_verification(
            plan, runner, perceive, oracle, goal, acts, problem.init, config.limits, config.replan_budget,
            mate=lambda h, bid: mate_loop(h, bid, config.mate), width=config.width, sample_sink=sample_sink,
            bolts={b})
        rec.steps += len(trace.steps)
        rec.replans += trace.replans
        rec.expansions += trace.expansions
        rec.actions.extend(s.action for s in trace.steps if s.success)
        rec.mate_iterations.extend(s.mate_iterations for s in trace.steps if s.mate_iterations is not None)
        if not trace.success:
            last = next((s for s in reversed(trace.steps) if not s.success), None)
            cat = categorize(trace.failure, trace.last_primitive_cause, last.action if last else None)
            rec.cause = cat.value
            where = f" at {last.action}" if last else ""
            rec.detail = f"{b}: {trace.failure.value if trace.failure else 'failed'}{where}"
            failed = True
            break
        obs = runner.observe()
    rec.speculation_attempts = list(runner.speculation_attempts)
    truth_targets = [x.id for x in runner.world.bolts if area is None or _in_area(x.pose.p, area)]
    rec.targets = len(truth_targets)
    rec.removed = sum(runner.world.bolt(x).fastening == Fastening.REMOVED for x in truth_targets)
    if not failed:
        stray = [x.id for x in runner.world.bolts
                 if x.id not in truth_targets and x.fastening != Fastening.FASTENED]
        if rec.removed < rec.targets:
            rec.cause = FailureCategory.PERCEPTION.value
            rec.detail = f"{rec.targets - rec.removed} target bolt(s) never found or not removed"
        elif stray:
            rec.cause = FailureCategory.WRONG_TARGET.value
            rec.detail = f"bolts outside the area disturbed: {stray}"
        else:
            rec.success = True
    if config.task == "sleeve_replace":
        rec.order_ok = sleeve_order_ok(rec.actions)
    elif config.task == "obstacle_clear":
        rec.order_ok = obstacle_order_ok(rec.actions, blocked)
    return rec


# ---------------------------------------------------------------- reports

@dataclass
class Report:
    task: str
    seed: int
    oracle: str
    trials: list[TrialRecord]
    wall_time_s: float = field(default=0.0, compare=False)

    @property
    def success_rate(self) -> float:
        return sum(t.success for t in self.trials) / len(self.trials) if self.trials else 0.0

    @property
    def cause_counts(self) -> dict[str, int]:
        return dict(sorted(Counter(t.cause for t in self.trials if t.cause).items()))

    def speculation_stats(self) -> dict[str, float]:
        a = [x for t in self.trials for x in t.speculation_attempts]
        if not a:
            return {"count": 0, "mean": 0.0, "single_attempt": 0.0}
        return {"count": len(a), "mean": float(np.mean(a)), "single_attempt": float(np.mean(np.array(a) == 1))}

    def summary(self) -> dict:
        return {
            "task": self.task, "seed": self.seed, "oracle": self.oracle, "trials": len(self.trials),
            "successes": sum(t.success for t in self.trials), "success_rate": self.success_rate,
            "causes": self.cause_counts, "speculation": self.speculation_stats(),
            "expansions": sum(t.expansions for t in self.trials), "replans": sum(t.replans for t in self.trials),
        }


def _oracle_label(c: OracleConfig) -> str:
    return f"noisy:{c.flip_rate:g}" if c.kind == "noisy" else c.kind


def run_task(config: ScenarioConfig, workers: int = 1) -> Report:
    """All trials of a scenario. Trials are independent, so ``workers`` > 1 runs them in processes."""
    config.validate()
    t0 = time.perf_counter()
    sink: list | None = [] if config.run_log else None
    if workers > 1 and sink is None:
        from concurrent.futures import ProcessPoolExecutor
        import multiprocessing as mp

        with ProcessPoolExecutor(workers, mp_context=mp.get_context("spawn")) as ex:
            records = list(ex.map(run_trial, [config] * config.trials, range(config.trials)))
    else:
        records = [run_trial(config, i, sink) for i in range(config.trials)]
    report = Report(config.task, config.seed, _oracle_label(config.oracle), records, time.perf_counter() - t0)
    if config.run_log:
        append_run_log(config.run_log, report, sink or [])
    return report


_TRIAL_FIELDS = [f.name for f in fields(TrialRecord)]


def _trial_dict(t: TrialRecord) -> dict:
    return {k: getattr(t, k) for k in _TRIAL_FIELDS}


def report_records(report: Report) -> str:
    head = {"schema": REPORT_SCHEMA, "version": REPORT_VERSION, **report.summary()}
    lines = [json.dumps(head, sort_keys=True)]
    lines += [json.dumps({"trial_record": _trial_dict(t)}, sort_keys=True) for t in report.trials]
    return "\n".join(lines) + "\n"


_CSV_COLUMNS = ["trial", "scene_seed", "success", "cause", "targets", "removed", "steps", "replans", "expansions",
                "speculation_mean", "mate_iterations_mean", "order_ok", "detail"]


def report_table(report: Report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_CSV_COLUMNS)
    for t in report.trials:
        spec = f"{np.mean(t.speculation_attempts):.4f}" if t.speculation_attempts else ""
        mate = f"{np.mean(t.mate_iterations):.4f}" if t.mate_iterations else ""
        w.writerow([t.trial, t.scene_seed, int(t.success), t.cause or "", t.targets, t.removed, t.steps, t.replans,
                    t.expansions, spec, mate, "" if t.order_ok is None else int(t.order_ok), t.detail])
    return buf.getvalue()


def emit_report(report: Report, fmt: str, path: str | Path) -> Path:
    """Write ``report`` as ``records`` (JSON lines) or ``table`` (CSV). Output is byte-stable."""
    if fmt == "records":
        text = report_records(report)
    elif fmt == "table":
        text = report_table(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    p = Path(path)
    try:
        with open(p, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as e:
        raise OSError(f"cannot write report to {p}: {e}") from e
    return p


def parse_report(text: str) -> Report:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty report")
    head = json.loads(lines[0])
    if head.get("schema") != REPORT_SCHEMA:
        raise ValueError("not a boltplan report")
    if head.get("version") != REPORT_VERSION:
        raise ValueError(f"unsupported report version {head.get('version')}")
    trials = [TrialRecord(**json.loads(ln)["trial_record"]) for ln in lines[1:]]
    return Report(head["task"], head["seed"], head["oracle"], trials)


def read_report(path: str | Path) -> Report:
    return parse_report(Path(path).read_text(encoding="utf-8"))


def append_run_log(path: str | Path, report: Report, samples: list[dict]) -> None:
    """Append trial traces and outcome-labelled perception samples as JSON lines."""
    with open(path, "a", encoding="utf-8") as fh:
        for t in report.trials:
            fh.write(json.dumps({"kind": "trial", "task": report.task, "seed": report.seed,
                                 **_trial_dict(t)}, sort_keys=True) + "\n")
        for s in samples:
            fh.write(json.dumps({"kind": "predicate_sample", **s}, sort_keys=True) + "\n")


# ---------------------------------------------------------------- speculation benchmark

@dataclass
class SpeculationRow:
    method: str
    n: int
    mean_attempts: float
    median_attempts: float
    single_attempt: float
    verified: float


def bench_speculation(n: int, seed: int = 0, max_attempts: int = 100, weights: str | Path | None = None,
                      params=None) -> list[SpeculationRow]:
    """Attempts until an IK-verified chassis pose, random sampling vs the network, same bolts."""
    from .rpsn import MlpParameters, baseline_random_speculate, random_bolts, speculate

    if params is None:
        if weights is not None and not Path(weights).is_file():
            raise FileNotFoundError(f"RPSN weights not found: {weights}")
        params = MlpParameters.load(weights) if weights is not None else _rpsn_params(None)
    if n <= 0:
        return []
    bolts = random_bolts(np.random.default_rng(seed), n).poses()
    rows = []
    for method in ("random", "rpsn"):
        rng = np.random.default_rng([seed, 1])
        res = []
        for b in bolts:
            if method == "rpsn":
                res.append(speculate(params, b, max_attempts, rng))
            else:
                res.append(baseline_random_speculate(b, max_attempts, rng))
        att = np.array([r.attempts for r in res])
        rows.append(SpeculationRow(method, n, float(att.mean()), float(np.median(att)),
                                   float(np.mean([r.verified and r.attempts == 1 for r in res])),
                                   float(np.mean([r.verified for r in res]))))
    return rows


def format_bench(rows: list[SpeculationRow]) -> str:
    out = ["method  n      mean    median  single  verified"]
    for r in rows:
        out.append(f"{r.method:<7} {r.n:<6d} {r.mean_attempts:<7.3f} {r.median_attempts:<7.1f} "
                   f"{r.single_attempt:<7.3f} {r.verified:.3f}")
    return "\n".join(out)


# ---------------------------------------------------------------- mate precision

@dataclass
class MateTrial:
    seed: int
    position_error_mm: float
    angle_error_rad: float
    iterations: int
    converged: bool
    mated: bool
    seconds: float


def mate_trial(seed: int, noise: NoiseConfig = NoiseConfig(), config: MateConfig = MateConfig()) -> MateTrial:
    """One bolt, base moved and arm approached, then the refinement loop and the mate step."""
    from .geometry import log_so3

    world = generate_scene(SceneConfig(layout="row", bolt_count=1), seed)
    bolt = world.bolts[0]
    runner = SceneRunner(world, noise, np.random.default_rng([seed, 1]), known_poses={bolt.id: bolt.pose})
    runner.step(("move_base", world.base_region, bolt.region))
    runner.step(("approach", bolt.id, bolt.region))
    t0 = time.perf_counter()
    res = mate_loop(runner, bolt.id, config)
    dt = time.perf_counter() - t0
    out = runner.step(("mate", bolt.id), command=res.tip)
    return MateTrial(seed, float(np.linalg.norm(res.pose.p - bolt.pose.p)),
                     float(np.linalg.norm(log_so3(bolt.pose.R.T @ res.pose.R))), res.iterations, res.converged,
                     out.success, dt)
