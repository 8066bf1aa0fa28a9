"""Exact oracle computed from the STRIPS semantics."""

from __future__ import annotations

from typing import Sequence

from ..pddl import Goal, GroundedAction, applicable, apply
from .base import Effect, Feasibility
from .relaxed import relaxed_index


def goal_gain(state: frozenset, action: GroundedAction, goal: Goal) -> int:
    """Goal literals that hold after the action but not before."""
    nxt = apply(state, action)
    return (len((goal.positive & nxt) - state)
            + len((goal.negative - nxt) & state))


def symbolic_propose(state: frozenset, goal: Goal, actions: Sequence[GroundedAction], width: int,
                     use_relaxed: bool = True) -> list[GroundedAction]:
    """Applicable actions by goal-literal gain, best first.

    Equal gains are ordered helpful-first (actions that begin a delete-relaxed plan),
    then by position in ``actions``.
    """
    if width < 1:
        raise ValueError("proposal width must be >= 1")
    helpful = relaxed_index(actions).helpful(state, goal) if use_relaxed else ()
    scored = []
    for i, a in enumerate(actions):
        if applicable(state, a):
            scored.append((-goal_gain(state, a, goal), i not in helpful, i, a))
    scored.sort(key=lambda t: t[:3])
    return [t[-1] for t in scored[:width]]


def symbolic_check(state: frozenset, action: GroundedAction) -> Feasibility:
    return Feasibility.YES if applicable(state, action) else Feasibility.NO


def symbolic_predict(state: frozenset, action: GroundedAction, goal: Goal) -> Effect:
    nxt = (state - action.delete) | action.add
    return Effect.SURE if goal.satisfied_count(nxt) > goal.satisfied_count(state) else Effect.LIKELY


class SymbolicOracle:
    stochastic = False

    def __init__(self, use_relaxed: bool = True):
        self.use_relaxed = use_relaxed

    def propose(self, state, goal, actions, width):
        return symbolic_propose(state, goal, actions, width, self.use_relaxed)

    def check(self, state, action):
        return symbolic_check(state, action)

    def predict(self, state, action, goal):
        return symbolic_predict(state, action, goal)
