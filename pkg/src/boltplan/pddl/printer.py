"""Canonical PDDL text for domains and problems."""

from __future__ import annotations

from .model import ActionSchema, Domain, Literal, Problem


def _lit(l: Literal) -> str:
    core = "(" + " ".join((l.predicate, *l.args)) + ")"
    return f"(not {core})" if l.negated else core


def _conj(lits, indent: str) -> str:
    if not lits:
        return "()"
    if len(lits) == 1:
        return _lit(lits[0])
    return "(and\n" + "".join(f"{indent}  {_lit(l)}\n" for l in lits) + f"{indent})"


def _typed(params) -> str:
    return " ".join(f"{v} - {s}" for v, s in params)


def format_action(a: ActionSchema) -> str:
    eff = list(a.add) + [Literal(l.predicate, l.args, True) for l in a.delete]
    return (f"  (:action {a.name}\n"
            f"    :parameters ({_typed(a.params)})\n"
            f"    :precondition {_conj(list(a.precondition), '    ')}\n"
            f"    :effect {_conj(eff, '    ')})\n")


def format_domain(d: Domain) -> str:
    out = [f"(define (domain {d.name})\n"]
    out.append(f"  (:requirements {' '.join(d.requirements)})\n")
    if d.types:
        by_parent: dict = {}
        for t, p in d.types.items():
            by_parent.setdefault(p, []).append(t)
        parts = [f"{' '.join(ts)} - {p}" for p, ts in by_parent.items()]
        out.append(f"  (:types {' '.join(parts)})\n")
    out.append("  (:predicates\n")
    for p in d.predicates.values():
        args = (" " + _typed(p.params)) if p.params else ""
        out.append(f"    ({p.name}{args})\n")
    out.append("  )\n")
    for a in d.actions:
        out.append(format_action(a))
    out.append(")\n")
    return "".join(out)


def format_problem(p: Problem) -> str:
    out = [f"(define (problem {p.name})\n", f"  (:domain {p.domain_name})\n", "  (:objects\n"]
    by_sort: dict = {}
    for o, s in p.objects.items():
        by_sort.setdefault(s, []).append(o)
    for s, os_ in by_sort.items():
        out.append(f"    {' '.join(os_)} - {s}\n")
    out.append("  )\n  (:init\n")
    for atom in sorted(p.init):
        out.append(f"    ({' '.join(atom)})\n")
    out.append("  )\n")
    lits = [Literal(a[0], a[1:]) for a in sorted(p.goal.positive)]
    lits += [Literal(a[0], a[1:], True) for a in sorted(p.goal.negative)]
    out.append(f"  (:goal {_conj(lits, '  ')})\n)\n")
    return "".join(out)
