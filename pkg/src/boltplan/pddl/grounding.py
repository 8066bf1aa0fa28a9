"""Enumerate sort-respecting bindings of every action schema."""

from __future__ import annotations

from itertools import product

from .model import Domain, GroundedAction, Literal, Problem


def _bind(lits: tuple[Literal, ...], env: dict) -> frozenset:
    return frozenset((l.predicate, *(env.get(a, a) for a in l.args)) for l in lits)


def ground(domain: Domain, problem: Problem) -> list[GroundedAction]:
    """All bindings, ordered by (schema name, argument tuple)."""
    out = []
    for schema in domain.actions:
        pools = [problem.objects_of(domain, sort) for _, sort in schema.params]
        pos = tuple(l for l in schema.precondition if not l.negated)
        neg = tuple(l for l in schema.precondition if l.negated)
        for combo in product(*pools):
            env = {v: o for (v, _), o in zip(schema.params, combo)}
            out.append(GroundedAction(schema.name, tuple(combo), _bind(pos, env), _bind(neg, env),
                                      _bind(schema.add, env), _bind(schema.delete, env)))
    out.sort(key=lambda g: g.key)
    return out


def ground_count(domain: Domain, problem: Problem) -> int:
    total = 0
    for schema in domain.actions:
        n = 1
        for _, sort in schema.params:
            n *= len(problem.objects_of(domain, sort))
        total += n
    return total
