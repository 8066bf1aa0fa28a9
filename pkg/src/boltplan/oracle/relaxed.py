"""Delete-relaxation reachability used to break ties between equal-gain proposals."""

from __future__ import annotations

from collections import OrderedDict
from typing import Sequence

from ..pddl import Goal, GroundedAction


def _absent(atom: tuple) -> tuple:
    return ("not",) + atom


class RelaxedIndex:
    def __init__(self, actions: Sequence[GroundedAction]):
        self.actions = list(actions)
        # Negative literals become positive "absent" atoms so the relaxation keeps them.
        self.pre = [tuple(a.pre_pos) + tuple(_absent(p) for p in a.pre_neg) for a in self.actions]
        self.add = [tuple(a.add) + tuple(_absent(p) for p in a.delete) for a in self.actions]
        self.negatable = {p for a in self.actions for p in a.pre_neg}
        self.consumers: dict = {}
        for i, pre in enumerate(self.pre):
            for p in pre:
                self.consumers.setdefault(p, []).append(i)
        self.no_pre = [i for i, pre in enumerate(self.pre) if not pre]

    def helpful(self, state: frozenset, goal: Goal) -> set[int]:
        """Indices of actions that start some relaxed plan from ``state`` (FF helpful actions)."""
        state = frozenset(state) | {_absent(p) for p in self.negatable if p not in state}
        level = {a: 0 for a in state}
        act_level: dict[int, int] = {}
        missing = [len(p) for p in self.pre]
        frontier = list(state)
        ready = list(self.no_pre)
        for p in frontier:
            for i in self.consumers.get(p, ()):
                missing[i] -= 1
                if missing[i] == 0:
                    ready.append(i)
        targets = (set(goal.positive) | {_absent(p) for p in goal.negative}) - state
        t = 0
        while ready and not targets <= level.keys():
            new_atoms = []
            for i in ready:
                act_level[i] = t
                for q in self.add[i]:
                    if q not in level:
                        level[q] = t + 1
                        new_atoms.append(q)
            ready = []
            for q in new_atoms:
                for i in self.consumers.get(q, ()):
                    missing[i] -= 1
                    if missing[i] == 0:
                        ready.append(i)
            t += 1
        if not targets <= level.keys():
            return set()
        # Backward extraction: cheapest first achiever per open subgoal.
        achievers: dict = {}
        for i, lv in act_level.items():
            for q in self.add[i]:
                if level.get(q) == lv + 1:
                    best = achievers.get(q)
                    if best is None or i < best:
                        achievers[q] = i
        agenda = sorted(targets, key=lambda q: -level[q])
        chosen: set[int] = set()
        helpful: set[int] = set()
        seen = set()
        while agenda:
            q = agenda.pop()
            if q in seen or level[q] == 0:
                continue
            seen.add(q)
            i = achievers[q]
            if i in chosen:
                continue
            chosen.add(i)
            if act_level[i] == 0:
                helpful.add(i)
            for p in self.pre[i]:
                if level[p] > 0 and p not in seen:
                    agenda.append(p)
        return helpful


_CACHE: OrderedDict = OrderedDict()


def relaxed_index(actions: Sequence[GroundedAction]) -> RelaxedIndex:
    key = id(actions)
    hit = _CACHE.get(key)
    if hit is not None and hit.actions and len(hit.actions) == len(actions) and hit.actions[0] is actions[0]:
        _CACHE.move_to_end(key)
        return hit
    idx = RelaxedIndex(actions)
    _CACHE[key] = idx
    # Keep the source sequence alive so its id cannot be recycled while cached.
    idx._source = actions
    while len(_CACHE) > 8:
        _CACHE.popitem(last=False)
    return idx
