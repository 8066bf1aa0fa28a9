"""Typed-STRIPS domain/problem model with closed-world state semantics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

Atom = tuple  # (predicate, *arguments)
State = frozenset


class PddlError(ValueError):
    """Error with an optional source position."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.message = message
        self.line = line
        self.col = col
        where = f"{line}:{col}: " if line is not None else ""
        super().__init__(where + message)


class LexError(PddlError):
    pass


class ParseError(PddlError):
    pass


class RequirementError(PddlError):
    pass


class UndeclaredPredicateError(PddlError):
    pass


class SortError(PddlError):
    pass


class ArityError(PddlError):
    pass


class InapplicableActionError(ValueError):
    pass


SUPPORTED_REQUIREMENTS = (":strips", ":typing", ":negative-preconditions")


@dataclass(frozen=True)
class Literal:
    predicate: str
    args: tuple[str, ...]
    negated: bool = False
    pos: tuple[int, int] | None = field(default=None, compare=False, repr=False)

    @property
    def atom(self) -> Atom:
        return (self.predicate, *self.args)


@dataclass(frozen=True)
class PredicateDecl:
    name: str
    params: tuple[tuple[str, str], ...]  # (variable, sort)

    @property
    def arity(self) -> int:
        return len(self.params)


@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: tuple[tuple[str, str], ...]
    precondition: tuple[Literal, ...]
    add: tuple[Literal, ...]
    delete: tuple[Literal, ...]
    pos: tuple[int, int] | None = field(default=None, compare=False, repr=False)

    def canonical(self) -> ActionSchema:
        """Variables renamed by parameter position, for alpha-equivalence checks."""
        ren = {v: f"?x{i}" for i, (v, _) in enumerate(self.params)}

        def sub(lits):
            return tuple(Literal(l.predicate, tuple(ren.get(a, a) for a in l.args), l.negated) for l in lits)

        return ActionSchema(self.name, tuple((ren[v], s) for v, s in self.params),
                            sub(self.precondition), sub(self.add), sub(self.delete))


@dataclass(frozen=True)
class Domain:
    name: str
    requirements: tuple[str, ...]
    types: dict  # sort -> parent sort
    predicates: dict  # name -> PredicateDecl
    actions: tuple[ActionSchema, ...]

    def is_subsort(self, sort: str, ancestor: str) -> bool:
        seen = set()
        while sort is not None and sort not in seen:
            if sort == ancestor:
                return True
            seen.add(sort)
            sort = self.types.get(sort)
        return False

    def schema(self, name: str) -> ActionSchema:
        for a in self.actions:
            if a.name == name:
                return a
        raise KeyError(name)

    def alpha_equivalent(self, other: Domain) -> bool:
        return (self.name == other.name and set(self.requirements) == set(other.requirements)
                and self.types == other.types
                and {k: tuple(s for _, s in v.params) for k, v in self.predicates.items()}
                == {k: tuple(s for _, s in v.params) for k, v in other.predicates.items()}
                and [a.canonical() for a in self.actions] == [a.canonical() for a in other.actions])


@dataclass(frozen=True)
class Goal:
    positive: frozenset = frozenset()
    negative: frozenset = frozenset()

    def satisfied(self, state: Iterable[Atom]) -> bool:
        s = state if isinstance(state, (set, frozenset)) else frozenset(state)
        return self.positive <= s and not (self.negative & s)

    def satisfied_count(self, state) -> int:
        return len(self.positive & state) + len(self.negative - state)

    @property
    def literals(self) -> frozenset:
        return self.positive | self.negative


@dataclass(frozen=True)
class Problem:
    name: str
    domain_name: str
    objects: dict  # object -> sort (insertion order preserved)
    init: frozenset
    goal: Goal

    def objects_of(self, domain: Domain, sort: str) -> list[str]:
        return sorted(o for o, s in self.objects.items() if domain.is_subsort(s, sort))


@dataclass(frozen=True, order=True)
class GroundedAction:
    name: str
    args: tuple[str, ...]
    pre_pos: frozenset = field(compare=False)
    pre_neg: frozenset = field(compare=False)
    add: frozenset = field(compare=False)
    delete: frozenset = field(compare=False)

    def __str__(self) -> str:
        return "(" + " ".join((self.name, *self.args)) + ")"

    @property
    def key(self) -> tuple:
        return (self.name, self.args)


def applicable(state: frozenset, ga: GroundedAction) -> bool:
    return ga.pre_pos <= state and not (ga.pre_neg & state)


def apply_unchecked(state: frozenset, ga: GroundedAction) -> frozenset:
    return (state - ga.delete) | ga.add


def apply(state: frozenset, ga: GroundedAction) -> frozenset:
    if not applicable(state, ga):
        missing = sorted(ga.pre_pos - state)
        blocking = sorted(ga.pre_neg & state)
        raise InapplicableActionError(f"{ga} not applicable: missing {missing}, blocked by {blocking}")
    return apply_unchecked(state, ga)


def format_atom(atom: Atom) -> str:
    return "(" + " ".join(atom) + ")"


def parse_atom(text: str) -> Atom:
    t = text.strip()
    if not (t.startswith("(") and t.endswith(")")):
        raise ValueError(f"not an atom: {text!r}")
    parts = t[1:-1].split()
    if not parts:
        raise ValueError(f"empty atom: {text!r}")
    return tuple(parts)
