from __future__ import annotations

from boltplan.fixtures import (
    continuous_problem,
    load_shipped_problem,
    root_branching,
    shipped_problem_names,
    solvable_fixtures,
    wide_fixtures,
)
from boltplan.pddl import ground, load_shipped_domain
from boltplan.planner import Plan, bfs_plan, relevant_actions


def test_solvable_fixtures_are_solvable_and_reproducible():
    a = solvable_fixtures(8, seed=9)
    assert a == solvable_fixtures(8, seed=9) and len(a) == 8
    dom = load_shipped_domain()
    for p in a:
        assert isinstance(bfs_plan(p.init, p.goal, relevant_actions(p.init, ground(dom, p))), Plan)


def test_wide_fixtures_meet_their_floor():
    for p in wide_fixtures(3, seed=1):
        assert root_branching(p) >= 8


def test_continuous_problem_shape():
    p = continuous_problem()
    assert sum(s == "bolt" for s in p.objects.values()) == 15
    assert {a for a in p.goal.positive if a[0] == "removed"} == {("removed", f"b{i}") for i in range(15)}


def test_shipped_problems_listed():
    names = shipped_problem_names()
    assert {"single_bolt", "sleeve_replace", "obstacle_clear", "continuous_15"} <= set(names)
    assert load_shipped_problem("single_bolt").name == "single_bolt"
