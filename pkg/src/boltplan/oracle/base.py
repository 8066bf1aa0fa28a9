from __future__ import annotations

from enum import Enum
from typing import Protocol, Sequence

from ..pddl import Goal, GroundedAction


class Feasibility(str, Enum):
    YES = "YES"
    NO = "NO"


class Effect(str, Enum):
    SURE = "SURE"
    LIKELY = "LIKELY"


class OracleError(RuntimeError):
    """An oracle could not produce a verdict."""


class Oracle(Protocol):
    #: True when repeated calls with the same arguments may disagree.
    stochastic: bool

    def propose(self, state: frozenset, goal: Goal, actions: Sequence[GroundedAction], width: int) -> list[GroundedAction]: ...

    def check(self, state: frozenset, action: GroundedAction) -> Feasibility: ...

    def predict(self, state: frozenset, action: GroundedAction, goal: Goal) -> Effect: ...
