"""Programmatic disassembly problems for planner tests and benchmarks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pddl import Goal, Problem, load_shipped_domain


@dataclass(frozen=True)
class FixtureBolt:
    name: str
    region: str
    sleeve: str
    obstructed: bool = False
    magnetic: bool = False
    fastened: bool = True


def build_problem(name: str, bolts: list[FixtureBolt], regions: list[str], sleeves: list[str],
                  base: str, mounted: str | None, goal_bolts: list[str],
                  home_goal: bool = True) -> Problem:
    objects = {b.name: "bolt" for b in bolts}
    objects.update({s: "sleeve" for s in sleeves})
    objects.update({r: "region" for r in regions})
    init = {("base_at", base), ("arm_home",), ("effector_free",)}
    if mounted is not None:
        init.add(("mounted", mounted))
    for b in bolts:
        init.add(("bolt_in", b.name, b.region))
        init.add(("fits", b.sleeve, b.name))
        if b.sleeve == mounted:
            init.add(("sleeve_matched", b.name))
        if b.obstructed:
            init.add(("obstructed", b.name))
        if b.magnetic:
            init.add(("magnetic", b.name))
        else:
            init.add(("retained", b.name))
        init.add(("fastened", b.name))
    pos = {("removed", b) for b in goal_bolts}
    if home_goal:
        pos.add(("arm_home",))
    return Problem(name, load_shipped_domain().name, objects, frozenset(init), Goal(frozenset(pos)))


def random_problem(rng: np.random.Generator, name: str = "fixture", n_bolts: tuple[int, int] = (1, 4),
                   n_regions: tuple[int, int] = (2, 3), n_sleeves: tuple[int, int] = (2, 3),
                   n_goal: tuple[int, int] = (1, 2), p_obstructed: float = 0.3,
                   p_magnetic: float = 0.3) -> Problem:
    nb = int(rng.integers(n_bolts[0], n_bolts[1] + 1))
    regions = [f"r{i}" for i in range(int(rng.integers(n_regions[0], n_regions[1] + 1)))]
    sleeves = [f"s{i}" for i in range(int(rng.integers(n_sleeves[0], n_sleeves[1] + 1)))]
    bolts = [FixtureBolt(f"b{i}", regions[int(rng.integers(len(regions)))], sleeves[int(rng.integers(len(sleeves)))],
                         bool(rng.random() < p_obstructed), bool(rng.random() < p_magnetic))
             for i in range(nb)]
    ng = min(nb, int(rng.integers(n_goal[0], n_goal[1] + 1)))
    goal = sorted(str(b) for b in rng.choice([b.name for b in bolts], size=ng, replace=False))
    base = regions[int(rng.integers(len(regions)))]
    mounted = sleeves[int(rng.integers(len(sleeves)))]
    return build_problem(name, bolts, regions, sleeves, base, mounted, goal)


def problem_from_world(world, state: frozenset, bolt_ids: list[str], goal: Goal, name: str = "scene",
                       regions: list[str] | None = None, extra_sleeves: list[str] = ()) -> Problem:
    """Planning problem over part of a simulated scene.

    Objects are the given bolts, their regions (plus the current base region) and the
    sleeves that matter for them: the mounted one, each bolt's match and ``extra_sleeves``.
    ``state`` is filtered to atoms over those objects.
    """
    from .scene import sleeves_for

    if regions is None:
        regions = [world.base_region] + [world.bolt(b).region for b in bolt_ids]
    regions = list(dict.fromkeys(regions))
    sleeves = list(dict.fromkeys(list(sleeves_for(world, bolt_ids)) + list(extra_sleeves)))
    objects = {b: "bolt" for b in bolt_ids}
    objects.update({s: "sleeve" for s in sleeves})
    objects.update({r: "region" for r in regions})
    init = frozenset(a for a in state if all(x in objects for x in a[1:]))
    return Problem(name, load_shipped_domain().name, objects, init, goal)


def _solvable(problem: Problem, limits=None):
    from .pddl import ground
    from .planner import Plan, SearchLimits, bfs_plan, relevant_actions

    actions = relevant_actions(problem.init, ground(load_shipped_domain(), problem))
    plan = bfs_plan(problem.init, problem.goal, actions, limits or SearchLimits())
    return actions, (plan if isinstance(plan, Plan) else None)


def solvable_fixtures(n: int, seed: int, **kw) -> list[Problem]:
    """``n`` random problems that breadth-first search solves within default limits."""
    rng = np.random.default_rng(seed)
    out: list[Problem] = []
    while len(out) < n:
        p = random_problem(rng, name=f"fixture{len(out)}", **kw)
        if _solvable(p)[1] is not None:
            out.append(p)
    return out


def root_branching(problem: Problem) -> int:
    from .pddl import applicable, ground
    from .planner import relevant_actions

    acts = relevant_actions(problem.init, ground(load_shipped_domain(), problem))
    return sum(applicable(problem.init, a) for a in acts)


def wide_fixtures(n: int, seed: int, min_branching: int = 8, min_depth: int = 6) -> list[Problem]:
    """Solvable problems with at least ``min_branching`` applicable actions at the root
    and a shortest plan of at least ``min_depth`` steps."""
    rng = np.random.default_rng(seed)
    out: list[Problem] = []
    while len(out) < n:
        p = random_problem(rng, name=f"wide{len(out)}", n_bolts=(4, 7), n_regions=(3, 5), n_sleeves=(3, 4),
                           n_goal=(1, 2))
        if root_branching(p) < min_branching:
            continue
        plan = _solvable(p)[1]
        if plan is not None and len(plan.actions) >= min_depth:
            out.append(p)
    return out


def continuous_problem(n_bolts: int = 15, per_region: int = 3) -> Problem:
    """A row of identical bolts spread over consecutive regions, goal: all removed."""
    regions = [f"r{i}" for i in range((n_bolts + per_region - 1) // per_region)]
    bolts = [FixtureBolt(f"b{i}", regions[i // per_region], "s0") for i in range(n_bolts)]
    return build_problem("continuous_15" if n_bolts == 15 else f"continuous_{n_bolts}", bolts, regions,
                         ["s0", "s1"], regions[0], "s0", [b.name for b in bolts])


def shipped_problem_names() -> list[str]:
    from importlib import resources

    root = resources.files("boltplan.data").joinpath("problems")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".pddl"))


def load_shipped_problem(name: str) -> Problem:
    from importlib import resources

    from .pddl import parse_problem

    text = resources.files("boltplan.data").joinpath("problems", f"{name}.pddl").read_text(encoding="utf-8")
    return parse_problem(text, load_shipped_domain())
