from __future__ import annotations

import json
from itertools import product

import numpy as np
import pytest

from boltplan.fixtures import load_shipped_problem, solvable_fixtures
from boltplan.oracle import Effect, Feasibility, SymbolicOracle, noisy_wrap
from boltplan.oracle.llm import (
    CredentialsError,
    EndpointConfig,
    Engine,
    ExampleStore,
    LlmOracle,
    OracleRequest,
    build_request,
    llm_call,
    parse_reply,
    render_input,
    render_prompt,
)
from boltplan.pddl import Goal, applicable, apply, ground, load_shipped_domain
from boltplan.planner import heuristic_plan, relevant_actions

DOMAIN = load_shipped_domain()


def _setup(name="single_bolt"):
    p = load_shipped_problem(name)
    return p, relevant_actions(p.init, ground(DOMAIN, p))


def _states(p, acts, limit=60):
    """A handful of reachable states by breadth-first enumeration."""
    seen, order = {p.init}, [p.init]
    i = 0
    while i < len(order) and len(order) < limit:
        for a in acts:
            if applicable(order[i], a):
                n = apply(order[i], a)
                if n not in seen:
                    seen.add(n)
                    order.append(n)
        i += 1
    return order


# ---------------------------------------------------------------- symbolic

def test_symbolic_check_and_predict_agree_with_brute_force():
    o = SymbolicOracle()
    for p in solvable_fixtures(5, seed=1):
        acts = relevant_actions(p.init, ground(DOMAIN, p))
        for s, a in product(_states(p, acts, 25), acts):
            ok = a.pre_pos <= s and not (a.pre_neg & s)
            assert (o.check(s, a) == Feasibility.YES) == ok
            if ok:
                nxt = (s - a.delete) | a.add
                gained = p.goal.satisfied_count(nxt) > p.goal.satisfied_count(s)
                assert (o.predict(s, a, p.goal) == Effect.SURE) == gained


def test_symbolic_propose_returns_applicable_best_gain_first():
    o = SymbolicOracle()
    p, acts = _setup("sleeve_replace")
    for s in _states(p, acts):
        out = o.propose(s, p.goal, acts, 5)
        assert all(applicable(s, a) for a in out)
        assert len(out) == min(5, sum(applicable(s, a) for a in acts))
        gains = [len((p.goal.positive & apply(s, a)) - s) + len((p.goal.negative - apply(s, a)) & s) for a in out]
        assert gains == sorted(gains, reverse=True)


def test_propose_rejects_zero_width():
    p, acts = _setup()
    with pytest.raises(ValueError):
        SymbolicOracle().propose(p.init, p.goal, acts, 0)


# ---------------------------------------------------------------- noisy

def test_flip_zero_is_identity_and_flip_one_inverts():
    p, acts = _setup()
    exact = SymbolicOracle()
    never = noisy_wrap(exact, 0.0, np.random.default_rng(0), permute=False)
    always = noisy_wrap(exact, 1.0, np.random.default_rng(0), permute=False)
    for s in _states(p, acts, 20):
        assert never.propose(s, p.goal, acts, 5) == exact.propose(s, p.goal, acts, 5)
        for a in acts:
            assert never.check(s, a) == exact.check(s, a)
            assert always.check(s, a) != exact.check(s, a)
            assert always.predict(s, a, p.goal) != exact.predict(s, a, p.goal)


def test_flip_frequency_matches_rate():
    p, acts = _setup()
    o = noisy_wrap(SymbolicOracle(), 0.1, np.random.default_rng(5))
    for _ in range(500):
        for a in acts:
            o.check(p.init, a)
    assert o.calls == 500 * len(acts)
    assert abs(o.flips / o.calls - 0.1) < 0.02


def test_flip_rate_out_of_range():
    with pytest.raises(ValueError):
        noisy_wrap(SymbolicOracle(), 1.5, np.random.default_rng(0))


# ---------------------------------------------------------------- language model

ENDPOINT = EndpointConfig("http://localhost:9/v1/chat/completions", "test-model", "k3y", timeout_s=1.0, retries=2)


def _chat(text):
    return json.dumps({"choices": [{"message": {"role": "assistant", "content": text}}]})


class Canned:
    def __init__(self, *replies):
        self.replies = list(replies)
        self.bodies = []

    def __call__(self, url, body, headers, timeout):
        self.bodies.append(json.loads(body))
        r = self.replies.pop(0) if len(self.replies) > 1 else self.replies[0]
        if isinstance(r, Exception):
            raise r
        return _chat(r)


def test_parse_reply_keywords():
    assert parse_reply(Engine.FEASIBILITY_CHECK, "Feasibility: YES") == (Feasibility.YES, True)
    assert parse_reply(Engine.FEASIBILITY_CHECK, "I think NO.") == (Feasibility.NO, True)
    assert parse_reply(Engine.FEASIBILITY_CHECK, "maybe")[1] is False
    assert parse_reply(Engine.EFFECT_PREDICTION, "Effect: LIKELY") == (Effect.LIKELY, True)
    vocab = ["(mate b0)", "(insert b0)"]
    assert parse_reply(Engine.THOUGHT_GENERATION, "1. (Insert  b0)\n2. (mate b0)\n3. (fly b0)", vocab) == \
        (["(insert b0)", "(mate b0)"], True)
    assert parse_reply(Engine.THOUGHT_GENERATION, "nothing useful", vocab) == ([], False)


def test_canned_yes_is_used_without_fallback():
    p, acts = _setup()
    o = LlmOracle(ENDPOINT, Canned("Feasibility: YES"))
    insert = next(a for a in acts if a.name == "insert")
    assert o.check(p.init, insert) == Feasibility.YES  # exact answer would be NO
    assert o.fallbacks == [] and o.calls == 1


def test_unparseable_reply_falls_back_to_exact():
    p, acts = _setup()
    t = Canned("I am not sure.")
    o = LlmOracle(ENDPOINT, t)
    insert = next(a for a in acts if a.name == "insert")
    assert o.check(p.init, insert) == Feasibility.NO
    assert len(o.fallbacks) == 1 and o.fallbacks[0].attempts == ENDPOINT.retries + 1
    assert len(t.bodies) == ENDPOINT.retries + 1


def test_retry_recovers_after_transport_error():
    p, acts = _setup()
    o = LlmOracle(ENDPOINT, Canned(TimeoutError("slow"), "Effect: SURE"))
    assert o.predict(p.init, acts[0], p.goal) == Effect.SURE and o.fallbacks == []


def test_thought_generation_maps_to_grounded_actions():
    p, acts = _setup()
    o = LlmOracle(ENDPOINT, Canned("(move_base r0 r1)\n(approach b0 r1)"))
    out = o.propose(p.init, p.goal, acts, 5)
    assert [str(a) for a in out] == ["(move_base r0 r1)", "(approach b0 r1)"]
    assert all(a in acts for a in out)


def test_llm_oracle_drives_the_planner_with_fallbacks():
    p, acts = _setup()
    o = LlmOracle(ENDPOINT, Canned("no keywords here"))
    plan = heuristic_plan(p.init, p.goal, acts, o)
    assert len(plan) == 8 and o.fallbacks and len(o.fallbacks) == o.calls


def test_call_never_exceeds_deadline():
    now = [0.0]

    def clock():
        return now[0]

    def hang(url, body, headers, timeout):
        now[0] += timeout
        raise TimeoutError("no answer")

    resp = llm_call(build_request(Engine.FEASIBILITY_CHECK, frozenset(), Goal(), _setup()[1][0]), ENDPOINT, hang, clock)
    assert not resp.parse_ok
    assert now[0] <= ENDPOINT.timeout_s * (ENDPOINT.retries + 1) + 1e-9


def test_request_round_trip_and_rendering():
    p, acts = _setup()
    req = build_request(Engine.FEASIBILITY_CHECK, p.init, p.goal, acts[0])
    assert OracleRequest.from_dict(json.loads(json.dumps(req.to_dict()))) == req
    assert render_input(req) == "\n".join([
        "State:", "(arm_home)", "(base_at r0)", "(bolt_in b0 r1)", "(effector_free)", "(fastened b0)",
        "(fits s0 b0)", "(mounted s0)", "(retained b0)", "(sleeve_matched b0)",
        "Goal:", "(arm_home)", "(removed b0)", f"Candidate: {acts[0]}",
    ])
    prompt = render_prompt(req)
    assert prompt == render_prompt(build_request(Engine.FEASIBILITY_CHECK, p.init, p.goal, acts[0]))
    assert prompt.rstrip().endswith("Output:") and "Example input:" in prompt


def test_request_body_is_deterministic():
    p, acts = _setup()
    t1, t2 = Canned("YES"), Canned("YES")
    LlmOracle(ENDPOINT, t1).check(p.init, acts[0])
    LlmOracle(ENDPOINT, t2).check(p.init, acts[0])
    assert t1.bodies == t2.bodies and t1.bodies[0]["temperature"] == 0


def test_candidate_rules():
    with pytest.raises(ValueError):
        OracleRequest(Engine.FEASIBILITY_CHECK, (), ())
    with pytest.raises(ValueError):
        OracleRequest(Engine.THOUGHT_GENERATION, (), (), candidate="(mate b0)")


@pytest.mark.parametrize("kw", [
    {"url": "localhost:80"}, {"model": ""}, {"api_key": ""}, {"api_key": "a b"}, {"timeout_s": 0.0},
])
def test_bad_credentials_rejected(kw):
    base = {"url": "https://x", "model": "m", "api_key": "k"}
    base.update(kw)
    with pytest.raises(CredentialsError):
        EndpointConfig(**base)


def test_from_env(monkeypatch):
    for k in ("BOLTPLAN_LLM_URL", "BOLTPLAN_LLM_MODEL", "BOLTPLAN_LLM_API_KEY"):
        monkeypatch.delenv(k, raising=False)
    with pytest.raises(CredentialsError, match="BOLTPLAN_LLM_URL"):
        EndpointConfig.from_env()
    monkeypatch.setenv("BOLTPLAN_LLM_URL", "https://api.example/v1")
    monkeypatch.setenv("BOLTPLAN_LLM_MODEL", "m")
    monkeypatch.setenv("BOLTPLAN_LLM_API_KEY", "k")
    assert EndpointConfig.from_env().model == "m"


def test_example_store_appends_and_reloads(tmp_path):
    path = tmp_path / "examples.jsonl"
    store = ExampleStore(path)
    n = len(store.examples(Engine.EFFECT_PREDICTION))
    assert n == len(ExampleStore.shipped(Engine.EFFECT_PREDICTION)) > 0
    store.append(Engine.EFFECT_PREDICTION, "State:\n(arm_home)", "Effect: SURE")
    assert len(store.examples(Engine.EFFECT_PREDICTION)) == n + 1
    reloaded = ExampleStore(path)
    assert reloaded.examples(Engine.EFFECT_PREDICTION)[-1] == ("State:\n(arm_home)", "Effect: SURE")
    assert len(reloaded.examples(Engine.FEASIBILITY_CHECK)) == len(ExampleStore.shipped(Engine.FEASIBILITY_CHECK))
