"""Breadth-first and oracle-guided search over grounded STRIPS states."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

from .oracle.base import Effect, Feasibility, OracleError
from .pddl import Goal, GroundedAction, apply, apply_unchecked, applicable, format_atom
from .pddl.model import InapplicableActionError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchLimits:
    max_depth: int = 64
    max_expansions: int = 10_000


@dataclass(frozen=True)
class Plan:
    actions: tuple[GroundedAction, ...]
    states: tuple[frozenset, ...]  # state after each action
    expansions: int = 0

    def __len__(self) -> int:
        return len(self.actions)

    def names(self) -> list[str]:
        return [a.name for a in self.actions]

    def pretty(self) -> str:
        return "\n".join(f"{i + 1:3d}. {a}" for i, a in enumerate(self.actions))


@dataclass(frozen=True)
class Unsolvable:
    reason: str  # "exhausted", "depth_limit" or "expansion_limit"
    expansions: int = 0

    def __bool__(self) -> bool:
        return False


@dataclass
class SearchNode:
    state: frozenset
    parent: SearchNode | None = None
    action: GroundedAction | None = None
    depth: int = 0
    feasibility: Feasibility | None = None
    effect: Effect | None = None

    def path(self) -> tuple[list[GroundedAction], list[frozenset]]:
        acts, states = [], []
        n = self
        while n.parent is not None:
            acts.append(n.action)
            states.append(n.state)
            n = n.parent
        return acts[::-1], states[::-1]


class PlannerOracleError(RuntimeError):
    def __init__(self, cause: Exception, expansions: int):
        super().__init__(f"oracle failed after {expansions} expansions: {cause}")
        self.cause = cause
        self.expansions = expansions


def relevant_actions(init: frozenset, actions: Sequence[GroundedAction]) -> list[GroundedAction]:
    """Drop groundings whose static preconditions can never hold; order is preserved."""
    touched = set()
    for a in actions:
        touched.update(p[0] for p in a.add)
        touched.update(p[0] for p in a.delete)
    out = []
    for a in actions:
        ok = all(p in init for p in a.pre_pos if p[0] not in touched)
        ok = ok and not any(p in init for p in a.pre_neg if p[0] not in touched)
        if ok:
            out.append(a)
    return out


def predict_next(state: frozenset, action: GroundedAction) -> frozenset:
    return apply(state, action)


def validate_plan(init: frozenset, goal: Goal, actions: Sequence[GroundedAction]) -> tuple[bool, str]:
    s = init
    for i, a in enumerate(actions):
        try:
            s = apply(s, a)
        except InapplicableActionError as e:
            return False, f"step {i}: {e}"
    if not goal.satisfied(s):
        return False, "goal not satisfied at the end"
    return True, ""


def _plan_from(node: SearchNode, expansions: int) -> Plan:
    acts, states = node.path()
    return Plan(tuple(acts), tuple(states), expansions)


def bfs_plan(init: frozenset, goal: Goal, actions: Sequence[GroundedAction],
             limits: SearchLimits = SearchLimits()) -> Plan | Unsolvable:
    """Shortest plan; ties go to the lexicographically smallest action sequence."""
    init = frozenset(init)
    if goal.satisfied(init):
        return Plan((), (), 0)
    acts = relevant_actions(init, actions)
    root = SearchNode(init)
    frontier = deque([root])
    visited = {init}
    expansions = 0
    depth_cut = False
    while frontier:
        node = frontier.popleft()
        if node.depth >= limits.max_depth:
            depth_cut = True
            continue
        if expansions >= limits.max_expansions:
            return Unsolvable("expansion_limit", expansions)
        expansions += 1
        s = node.state
        for a in acts:
            if not (a.pre_pos <= s) or (a.pre_neg & s):
                continue
            nxt = (s - a.delete) | a.add
            if nxt in visited:
                continue
            visited.add(nxt)
            child = SearchNode(nxt, node, a, node.depth + 1)
            if goal.satisfied(nxt):
                return _plan_from(child, expansions)
            frontier.append(child)
    return Unsolvable("depth_limit" if depth_cut else "exhausted", expansions)


def heuristic_plan(init: frozenset, goal: Goal, actions: Sequence[GroundedAction], oracle,
                   limits: SearchLimits = SearchLimits(), width: int = 5,
                   max_rounds: int = 50) -> Plan | Unsolvable:
    """Oracle-guided tree search.

    Proposals that the oracle marks infeasible are dropped. Survivors labelled SURE are
    expanded before any LIKELY node, FIFO within a label; LIKELY nodes are only deferred. Candidate plans are replayed under
    exact semantics before being returned. A stochastic oracle gets fresh rounds when a
    round exhausts its frontier, until the shared expansion budget runs out.
    """
    init = frozenset(init)
    if goal.satisfied(init):
        return Plan((), (), 0)
    acts = relevant_actions(init, actions)
    expansions = 0
    rounds = max_rounds if getattr(oracle, "stochastic", False) else 1
    reason = "exhausted"
    for _ in range(rounds):
        sure: deque = deque()
        likely: deque = deque([SearchNode(init)])
        visited = {init}
        depth_cut = False
        while sure or likely:
            node = sure.popleft() if sure else likely.popleft()
            if node.depth >= limits.max_depth:
                depth_cut = True
                continue
            if expansions >= limits.max_expansions:
                return Unsolvable("expansion_limit", expansions)
            expansions += 1
            try:
                proposals = oracle.propose(node.state, goal, acts, width)
            except OracleError as e:
                raise PlannerOracleError(e, expansions) from e
            for a in proposals[:width]:
                try:
                    verdict = oracle.check(node.state, a)
                    if verdict == Feasibility.NO:
                        continue
                    label = oracle.predict(node.state, a, goal)
                except OracleError as e:
                    raise PlannerOracleError(e, expansions) from e
                # Oracle-approved actions are applied without the applicability test;
                # the replay below rejects plans built on a wrong YES.
                nxt = apply_unchecked(node.state, a)
                if nxt in visited:
                    continue
                visited.add(nxt)
                child = SearchNode(nxt, node, a, node.depth + 1, verdict, label)
                if goal.satisfied(nxt):
                    path, _ = child.path()
                    ok, why = validate_plan(init, goal, path)
                    if ok:
                        return _plan_from(child, expansions)
                    log.debug("candidate plan rejected: %s", why)
                    continue
                (sure if label == Effect.SURE else likely).append(child)
        reason = "depth_limit" if depth_cut else "exhausted"
    return Unsolvable(reason, expansions)


def reachable_states(init: frozenset, actions: Sequence[GroundedAction], cap: int = 100_000) -> dict:
    """Exact shortest distance to every reachable state (None if more than ``cap``)."""
    init = frozenset(init)
    acts = relevant_actions(init, actions)
    dist = {init: 0}
    q = deque([init])
    while q:
        s = q.popleft()
        for a in acts:
            if applicable(s, a):
                n = apply_unchecked(s, a)
                if n not in dist:
                    dist[n] = dist[s] + 1
                    if len(dist) > cap:
                        return None
                    q.append(n)
    return dist


# ---------------------------------------------------------------- execution

class ExecutionFailure(str, Enum):
    REPLAN_BUDGET = "replan_budget_exhausted"
    NO_PLAN = "no_plan"
    BOLT_LOST = "bolt_lost"
    STEP_LIMIT = "step_limit"


@dataclass
class StepRecord:
    index: int
    action: str
    success: bool
    cause: str | None = None
    mismatch: tuple[str, ...] = ()
    replanned: bool = False
    mate_iterations: int | None = None


@dataclass
class ExecutionTrace:
    success: bool = False
    steps: list[StepRecord] = field(default_factory=list)
    replans: int = 0
    failure: ExecutionFailure | None = None
    last_primitive_cause: str | None = None
    plans: list[list[str]] = field(default_factory=list)
    expansions: int = 0
    final_state: frozenset = frozenset()

    def action_names(self, successful_only: bool = True) -> list[str]:
        return [s.action for s in self.steps if s.success or not successful_only]


def compared_atoms(action: GroundedAction, goal: Goal) -> frozenset:
    return frozenset(action.add | action.delete | goal.positive | goal.negative)


def merge_observation(perceived: frozenset, predicted: frozenset, visible: set[str], bolts: set[str]) -> frozenset:
    """Perceived atoms for what is in view; predicted atoms about bolts out of view persist."""
    def hidden(atom):
        return any(x in bolts and x not in visible for x in atom[1:])

    return frozenset(a for a in perceived if not hidden(a)) | frozenset(a for a in predicted if hidden(a))


def execute_with_verification(plan: Plan, handle, perceive: Callable, oracle, goal: Goal,
                              actions: Sequence[GroundedAction], init: frozenset,
                              limits: SearchLimits = SearchLimits(), replan_budget: int = 5,
                              mate=None, width: int = 5, max_steps: int = 200,
                              sample_sink: list | None = None, bolts: set[str] | None = None) -> ExecutionTrace:
    """Run a plan on a world handle, checking every step against perception.

    ``handle`` needs ``step(action, command=None)`` returning an outcome with ``success`` and
    ``cause``, and ``observe()``. ``perceive`` turns an observation into a state. ``mate``, when
    given, is called as ``mate(handle, bolt_id)`` before each mate step and returns an object
    with ``tip`` and ``iterations``. After each step the predicted and perceived states are
    compared on the action's effects and the goal; any difference triggers a replan from the
    perceived state. Atoms about ``bolts`` that are out of view keep their predicted value.
    """
    objects = set()
    for a in actions:
        objects.update(a.args)
    if bolts is None:
        bolts = {x for a in actions for x, sort in zip(a.args, _arg_sorts(a)) if sort == "bolt"}

    def restrict(state):
        return frozenset(x for x in state if all(y in objects for y in x[1:]))

    trace = ExecutionTrace(plans=[plan.names()], expansions=plan.expansions)
    believed = frozenset(init)
    queue = list(plan.actions)
    steps = 0
    while True:
        if goal.satisfied(believed):
            trace.success = True
            break
        if not queue:
            # Plan ran out without reaching the goal: treat as a divergence.
            if not _replan(trace, believed, goal, actions, oracle, limits, width, replan_budget, queue):
                break
            continue
        if steps >= max_steps:
            trace.failure = ExecutionFailure.STEP_LIMIT
            break
        a = queue.pop(0)
        steps += 1
        rec = StepRecord(len(trace.steps), str(a), False)
        command = None
        if a.name == "mate" and mate is not None:
            try:
                res = mate(handle, a.args[0])
            except Exception as e:  # noqa: BLE001 - the estimator's own error types
                if type(e).__name__ != "BoltLostError":
                    raise
                rec.cause = ExecutionFailure.BOLT_LOST.value
                trace.steps.append(rec)
                trace.failure = ExecutionFailure.BOLT_LOST
                trace.last_primitive_cause = rec.cause
                break
            command, rec.mate_iterations = res.tip, res.iterations
        outcome = handle.step(a, command=command)
        rec.success = bool(outcome.success)
        if not outcome.success:
            rec.cause = getattr(outcome.cause, "value", outcome.cause)
            trace.last_primitive_cause = rec.cause
        obs = handle.observe()
        predicted = apply_unchecked(believed, a)
        perceived = restrict(perceive(obs))
        observed = merge_observation(perceived, predicted, set(getattr(obs, "visible_ids", ())), bolts)
        scope = compared_atoms(a, goal)
        diff = sorted(x for x in scope if (x in predicted) != (x in observed))
        if sample_sink is not None:
            sample_sink.extend(_outcome_samples(obs, a, believed, predicted, outcome.success))
        believed = observed
        trace.final_state = observed
        rec.mismatch = tuple(format_atom(x) for x in diff)
        trace.steps.append(rec)
        if diff and not goal.satisfied(observed):
            rec.replanned = True
            if not _replan(trace, observed, goal, actions, oracle, limits, width, replan_budget, queue):
                break
    trace.final_state = believed
    return trace


def _arg_sorts(a: GroundedAction) -> tuple[str, ...]:
    from .pddl import load_shipped_domain

    try:
        schema = load_shipped_domain().schema(a.name)
    except KeyError:
        return ()
    return tuple(sort for _, sort in schema.params)


def _replan(trace: ExecutionTrace, state: frozenset, goal: Goal, actions, oracle, limits, width,
            budget: int, queue: list) -> bool:
    if trace.replans >= budget:
        trace.failure = ExecutionFailure.REPLAN_BUDGET
        return False
    trace.replans += 1
    plan = heuristic_plan(state, goal, actions, oracle, limits, width)
    trace.expansions += plan.expansions
    if not plan:
        trace.failure = ExecutionFailure.NO_PLAN
        return False
    trace.plans.append(plan.names())
    queue[:] = list(plan.actions)
    return True


def _outcome_samples(obs, action: GroundedAction, before: frozenset, predicted: frozenset, success: bool) -> list[dict]:
    """Perception samples labelled by the primitive outcome rather than by the camera."""
    from .perception import REGISTRY, PerceptionError, eval_predicate, default_params, featurize

    out = []
    params = default_params()
    for atom in sorted(action.add | action.delete):
        if atom[0] not in REGISTRY or len(atom) != 2:
            continue
        try:
            f = featurize(obs, atom[0], atom[1:])
        except PerceptionError:
            continue
        label = (atom in predicted) if success else (atom in before)
        out.append({"predicate": atom[0], "args": list(atom[1:]), "features": [float(v) for v in f],
                    "camera_probability": eval_predicate(params[atom[0]], f), "force_label": label,
                    "action": str(action)})
    return out
