from __future__ import annotations

import numpy as np
import pytest

from boltplan.fixtures import load_shipped_problem, random_problem, shipped_problem_names
from boltplan.pddl import (
    ArityError,
    Goal,
    InapplicableActionError,
    LexError,
    ParseError,
    PddlError,
    RequirementError,
    SortError,
    UndeclaredPredicateError,
    applicable,
    apply,
    format_atom,
    format_domain,
    format_problem,
    ground,
    ground_count,
    load_shipped_domain,
    parse_atom,
    parse_domain,
    parse_problem,
    shipped_domain_text,
)

DOMAIN = load_shipped_domain()

MINIMAL = """
(define (domain tiny)
  (:requirements :strips :typing)
  (:types thing)
  (:predicates (done ?t - thing))
  (:action finish :parameters (?t - thing) :precondition (and) :effect (done ?t)))
"""


def _problem(body_objects="", init="", goal="(and)"):
    return (f"(define (problem p) (:domain bolt-disassembly) (:objects {body_objects}) "
            f"(:init {init}) (:goal {goal}))")


def test_minimal_domain_round_trips():
    d = parse_domain(MINIMAL)
    assert [a.name for a in d.actions] == ["finish"]
    assert parse_domain(format_domain(d)) == d


def test_shipped_domain_has_the_twelve_primitives():
    names = {a.name for a in DOMAIN.actions}
    assert names == {"move_base", "approach", "mate", "insert", "engage", "rotate_loose", "extract", "retract",
                     "push_obstacle", "change_sleeve", "magnet_on", "magnet_off"}
    assert format_domain(parse_domain(format_domain(DOMAIN))) == format_domain(DOMAIN)


def test_unknown_requirement_names_the_token():
    with pytest.raises(RequirementError, match=":durative-actions") as e:
        parse_domain(MINIMAL.replace(":typing", ":typing :durative-actions"))
    assert e.value.line is not None


def test_unbalanced_parenthesis_reports_position():
    with pytest.raises(PddlError) as e:
        parse_domain(MINIMAL + "(")
    assert e.value.line is not None and e.value.col is not None


def test_lexical_error():
    with pytest.raises(LexError):
        parse_domain(MINIMAL.replace("finish", "fin$ish"))


def test_undeclared_predicate_in_domain():
    with pytest.raises(UndeclaredPredicateError):
        parse_domain(MINIMAL.replace(":effect (done ?t)", ":effect (gone ?t)"))


def test_empty_problem_is_trivially_satisfied():
    p = parse_problem(_problem(), DOMAIN)
    assert p.goal.satisfied(p.init)


def test_problem_errors():
    with pytest.raises(UndeclaredPredicateError):
        parse_problem(_problem("b0 - bolt", goal="(vanished b0)"), DOMAIN)
    with pytest.raises(SortError):
        parse_problem(_problem("b0 - widget"), DOMAIN)
    with pytest.raises(ArityError):
        parse_problem(_problem("b0 - bolt", init="(removed b0 b0)"), DOMAIN)


def test_continuous_fixture_grounding_count():
    p = load_shipped_problem("continuous_15")
    counts = {s: sum(1 for v in p.objects.values() if v == s) for s in ("bolt", "sleeve", "region")}
    assert counts["bolt"] == 15
    b, s, r = counts["bolt"], counts["sleeve"], counts["region"]
    by_schema = {"move_base": r * r, "approach": b * r, "push_obstacle": b * r, "change_sleeve": b * s * s,
                 "magnet_off": 1}
    expected = sum(by_schema.get(a.name, b) for a in DOMAIN.actions)
    assert ground_count(DOMAIN, p) == expected == len(ground(DOMAIN, p))


def test_grounding_order_and_empty_sorts():
    p = parse_problem(_problem("s0 - sleeve r0 - region"), DOMAIN)
    acts = ground(DOMAIN, p)
    assert all(a.name in ("move_base", "magnet_off") for a in acts)
    assert [a.key for a in acts] == sorted(a.key for a in acts)


def test_rotate_loose_and_change_sleeve_semantics():
    p = load_shipped_problem("single_bolt")
    acts = {str(a): a for a in ground(DOMAIN, p)}
    s = frozenset(p.init | {("engaged", "b0"), ("inserted", "b0")}) - {("effector_free",)}
    assert applicable(s, acts["(rotate_loose b0)"])
    assert ("loosened", "b0") in apply(s, acts["(rotate_loose b0)"])
    sleeve_acts = [a for a in acts.values() if a.name == "change_sleeve"]
    assert all(not applicable(s, a) for a in sleeve_acts)


def test_apply_then_invert_restores_state():
    rng = np.random.default_rng(0)
    for _ in range(200):
        p = random_problem(rng)
        for a in ground(DOMAIN, p):
            if applicable(p.init, a):
                nxt = apply(p.init, a)
                back = (nxt - (a.add - p.init)) | (a.delete & p.init)
                assert back == p.init


def test_semantics_match_naive_reference():
    rng = np.random.default_rng(1)
    p = random_problem(rng, n_bolts=(3, 3))
    acts = ground(DOMAIN, p)
    atoms = sorted({x for a in acts for x in a.pre_pos | a.pre_neg | a.add | a.delete})
    declared = set(DOMAIN.predicates)
    for _ in range(10_000):
        state = frozenset(x for x in atoms if rng.random() < 0.3)
        a = acts[int(rng.integers(len(acts)))]
        ok = all(x in state for x in a.pre_pos) and all(x not in state for x in a.pre_neg)
        assert applicable(state, a) == ok
        if ok:
            nxt = apply(state, a)
            assert nxt == {x for x in state if x not in a.delete} | set(a.add)
            assert all(x[0] in declared for x in nxt)
        else:
            with pytest.raises(InapplicableActionError):
                apply(state, a)


def test_unbalancing_any_paren_in_fixtures_is_rejected():
    rng = np.random.default_rng(2)
    texts = [shipped_domain_text()] + [format_problem(load_shipped_problem(n)) for n in shipped_problem_names()]
    for text in texts:
        idx = [i for i, c in enumerate(text) if c in "()"]
        for i in rng.choice(idx, size=min(40, len(idx)), replace=False):
            broken = text[:i] + text[i + 1:]
            with pytest.raises(PddlError):
                if text is texts[0]:
                    parse_domain(broken)
                else:
                    parse_problem(broken, DOMAIN)


def test_atom_text_round_trip():
    assert parse_atom(format_atom(("bolt_in", "b0", "r1"))) == ("bolt_in", "b0", "r1")
    with pytest.raises(ValueError):
        parse_atom("bolt_in b0")


def test_goal_counts():
    g = Goal(frozenset({("a",)}), frozenset({("b",)}))
    assert g.satisfied({("a",)}) and not g.satisfied({("a",), ("b",)})
    assert g.satisfied_count(frozenset()) == 1
