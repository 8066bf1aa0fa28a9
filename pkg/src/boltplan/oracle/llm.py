"""Remote language-model oracle over an HTTP chat-completion endpoint.

Prompts are rendered deterministically from a per-engine instruction file, few-shot
examples and the state as sorted ground literals. Replies are parsed by keyword: the first
YES/NO or SURE/LIKELY, or action lines matched against the grounded vocabulary. A call
that cannot be parsed after the retries falls back to the exact symbolic engine, and the
fallback is recorded.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

from ..pddl import Goal, GroundedAction, format_atom
from .base import Effect, Feasibility
from .symbolic import SymbolicOracle

log = logging.getLogger(__name__)

ENV_URL = "BOLTPLAN_LLM_URL"
ENV_MODEL = "BOLTPLAN_LLM_MODEL"
ENV_KEY = "BOLTPLAN_LLM_API_KEY"


class Engine(str, Enum):
    THOUGHT_GENERATION = "thought_generation"
    FEASIBILITY_CHECK = "feasibility_check"
    EFFECT_PREDICTION = "effect_prediction"


class CredentialsError(ValueError):
    pass


@dataclass(frozen=True)
class OracleRequest:
    engine: Engine
    state: tuple[str, ...]
    goal: tuple[str, ...]
    candidate: str | None = None
    instruction: str = ""
    examples: tuple[tuple[str, str], ...] = ()
    vocabulary: tuple[str, ...] = ()  # available actions, thought generation only

    def __post_init__(self):
        object.__setattr__(self, "engine", Engine(self.engine))
        if (self.candidate is None) != (self.engine == Engine.THOUGHT_GENERATION):
            raise ValueError("candidate is required for check/predict and forbidden for thought generation")

    def to_dict(self) -> dict:
        return {"engine": self.engine.value, "state": list(self.state), "goal": list(self.goal),
                "candidate": self.candidate, "instruction": self.instruction,
                "examples": [list(e) for e in self.examples], "vocabulary": list(self.vocabulary)}

    @classmethod
    def from_dict(cls, d: dict) -> OracleRequest:
        return cls(Engine(d["engine"]), tuple(d["state"]), tuple(d["goal"]), d.get("candidate"),
                   d.get("instruction", ""), tuple(tuple(e) for e in d.get("examples", ())),
                   tuple(d.get("vocabulary", ())))


@dataclass(frozen=True)
class OracleResponse:
    raw: str
    verdict: object  # list[str] | Feasibility | Effect | None
    parse_ok: bool
    attempts: int = 1
    fallback: bool = False


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    model: str
    api_key: str
    timeout_s: float = 30.0
    retries: int = 2

    def __post_init__(self):
        if not self.url.startswith(("http://", "https://")):
            raise CredentialsError(f"{ENV_URL} must be an http(s) URL")
        if not self.model:
            raise CredentialsError(f"{ENV_MODEL} is empty")
        if not self.api_key or any(c.isspace() for c in self.api_key):
            raise CredentialsError(f"{ENV_KEY} is empty or contains whitespace")
        if self.timeout_s <= 0 or self.retries < 0:
            raise CredentialsError("timeout must be positive and retries non-negative")

    @classmethod
    def from_env(cls, timeout_s: float = 30.0, retries: int = 2) -> EndpointConfig:
        missing = [k for k in (ENV_URL, ENV_MODEL, ENV_KEY) if not os.environ.get(k)]
        if missing:
            raise CredentialsError(f"missing environment variables: {', '.join(missing)}")
        return cls(os.environ[ENV_URL], os.environ[ENV_MODEL], os.environ[ENV_KEY], timeout_s, retries)


# ---------------------------------------------------------------- prompts

def render_state(atoms) -> tuple[str, ...]:
    return tuple(sorted(format_atom(a) if isinstance(a, tuple) else str(a) for a in atoms))


def render_input(req: OracleRequest) -> str:
    lines = ["State:", *req.state, "Goal:", *req.goal]
    if req.engine == Engine.THOUGHT_GENERATION:
        lines += ["Available actions:", *req.vocabulary]
    else:
        lines.append(f"Candidate: {req.candidate}")
    return "\n".join(lines)


def render_prompt(req: OracleRequest) -> str:
    parts = [req.instruction.strip()]
    for inp, out in req.examples:
        parts.append(f"Example input:\n{inp}\nExample output:\n{out}")
    parts.append(f"Input:\n{render_input(req)}\nOutput:")
    return "\n\n".join(parts) + "\n"


def _prompt_file(name: str) -> str:
    return resources.files("boltplan.data").joinpath("prompts", name).read_text(encoding="utf-8")


class ExampleStore:
    """Few-shot examples per engine: shipped ones plus logged pairs appended at run time."""

    def __init__(self, path: str | Path | None = None):
        self._lock = threading.Lock()
        self._extra: dict[Engine, list[tuple[str, str]]] = {e: [] for e in Engine}
        self.path = Path(path) if path else None
        if self.path and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    r = json.loads(line)
                    self._extra[Engine(r["engine"])].append((r["input"], r["output"]))

    @staticmethod
    def shipped(engine: Engine) -> list[tuple[str, str]]:
        out = []
        for line in _prompt_file(f"{engine.value}_examples.jsonl").splitlines():
            if line.strip():
                r = json.loads(line)
                out.append((r["input"], r["output"]))
        return out

    def examples(self, engine: Engine) -> tuple[tuple[str, str], ...]:
        with self._lock:
            return tuple(self.shipped(engine) + self._extra[engine])

    def append(self, engine: Engine, inp: str, out: str) -> None:
        with self._lock:
            self._extra[Engine(engine)].append((inp, out))
            if self.path:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"engine": Engine(engine).value, "input": inp, "output": out},
                                        sort_keys=True) + "\n")


def build_request(engine: Engine, state: frozenset, goal: Goal, candidate: GroundedAction | None = None,
                  actions: Sequence[GroundedAction] = (), store: ExampleStore | None = None) -> OracleRequest:
    engine = Engine(engine)
    store = store or ExampleStore()
    goal_lines = render_state(goal.positive) + tuple(f"(not {format_atom(a)})" for a in sorted(goal.negative))
    return OracleRequest(engine, render_state(state), goal_lines, None if candidate is None else str(candidate),
                         _prompt_file(f"{engine.value}.txt"), store.examples(engine),
                         tuple(str(a) for a in actions) if engine == Engine.THOUGHT_GENERATION else ())


# ---------------------------------------------------------------- parsing

_YES_NO = re.compile(r"\b(YES|NO)\b")
_SURE_LIKELY = re.compile(r"\b(SURE|LIKELY)\b")
_ACTION = re.compile(r"\([a-z_][a-z0-9_\-]*(?:\s+[a-z0-9_\-]+)*\)")


def parse_reply(engine: Engine, text: str, vocabulary: Sequence[str] = ()) -> tuple[object, bool]:
    engine = Engine(engine)
    if engine == Engine.FEASIBILITY_CHECK:
        m = _YES_NO.search(text)
        return (Feasibility(m.group(1)), True) if m else (None, False)
    if engine == Engine.EFFECT_PREDICTION:
        m = _SURE_LIKELY.search(text)
        return (Effect(m.group(1)), True) if m else (None, False)
    vocab = set(vocabulary)
    found: list[str] = []
    for m in _ACTION.finditer(text.lower()):
        s = " ".join(m.group(0).split()).replace("( ", "(")
        if s in vocab and s not in found:
            found.append(s)
    return found, bool(found)


# ---------------------------------------------------------------- transport

Transport = Callable[[str, bytes, dict, float], str]


def urllib_transport(url: str, body: bytes, headers: dict, timeout: float) -> str:
    req = urllib.request.Request(url, data=body, headers=headers, method="POST")
    with urllib.request.urlopen(req, timeout=timeout) as resp:  # noqa: S310 - URL is operator-configured
        return resp.read().decode("utf-8")


def request_body(req: OracleRequest, endpoint: EndpointConfig) -> bytes:
    body = {"model": endpoint.model, "temperature": 0,
            "messages": [{"role": "user", "content": render_prompt(req)}]}
    return json.dumps(body, sort_keys=True).encode("utf-8")


def _reply_text(payload: str) -> str:
    data = json.loads(payload)
    return data["choices"][0]["message"]["content"]


def llm_call(req: OracleRequest, endpoint: EndpointConfig, transport: Transport = urllib_transport,
             clock: Callable[[], float] = time.monotonic) -> OracleResponse:
    """One oracle query with retries; never runs past timeout * (retries + 1)."""
    headers = {"Content-Type": "application/json", "Authorization": f"Bearer {endpoint.api_key}"}
    body = request_body(req, endpoint)
    deadline = clock() + endpoint.timeout_s * (endpoint.retries + 1)
    raw = ""
    attempts = 0
    for attempts in range(1, endpoint.retries + 2):
        remaining = deadline - clock()
        if remaining <= 0:
            break
        t0 = clock()
        try:
            raw = _reply_text(transport(endpoint.url, body, headers, min(endpoint.timeout_s, remaining)))
        except (urllib.error.URLError, TimeoutError, OSError, ValueError, KeyError, IndexError, TypeError) as e:
            log.warning("oracle call %s attempt %d failed after %.2fs: %s", req.engine.value, attempts,
                        clock() - t0, e)
            continue
        verdict, ok = parse_reply(req.engine, raw, req.vocabulary)
        log.info("oracle call %s attempt %d took %.2fs parse_ok=%s", req.engine.value, attempts, clock() - t0, ok)
        if ok:
            return OracleResponse(raw, verdict, True, attempts)
    return OracleResponse(raw, None, False, attempts)


# ---------------------------------------------------------------- oracle

@dataclass
class FallbackRecord:
    engine: str
    candidate: str | None
    attempts: int


class LlmOracle:
    """Planner oracle backed by a remote model, falling back to exact answers per call."""

    stochastic = True

    def __init__(self, endpoint: EndpointConfig, transport: Transport = urllib_transport,
                 store: ExampleStore | None = None, clock: Callable[[], float] = time.monotonic):
        self.endpoint = endpoint
        self.transport = transport
        self.store = store or ExampleStore()
        self.clock = clock
        self.exact = SymbolicOracle()
        self.fallbacks: list[FallbackRecord] = []
        self.calls = 0

    @classmethod
    def from_env(cls, **kw) -> LlmOracle:
        return cls(EndpointConfig.from_env(), **kw)

    def _ask(self, req: OracleRequest) -> OracleResponse:
        self.calls += 1
        resp = llm_call(req, self.endpoint, self.transport, self.clock)
        if not resp.parse_ok:
            self.fallbacks.append(FallbackRecord(req.engine.value, req.candidate, resp.attempts))
            log.warning("oracle %s fell back to the symbolic engine", req.engine.value)
        return resp

    def propose(self, state, goal, actions, width):
        req = build_request(Engine.THOUGHT_GENERATION, state, goal, actions=actions, store=self.store)
        resp = self._ask(req)
        if not resp.parse_ok:
            return self.exact.propose(state, goal, actions, width)
        by_name = {str(a): a for a in actions}
        return [by_name[s] for s in resp.verdict][:width]

    def check(self, state, action):
        resp = self._ask(build_request(Engine.FEASIBILITY_CHECK, state, Goal(), action, store=self.store))
        return resp.verdict if resp.parse_ok else self.exact.check(state, action)

    def predict(self, state, action, goal):
        resp = self._ask(build_request(Engine.EFFECT_PREDICTION, state, goal, action, store=self.store))
        return resp.verdict if resp.parse_ok else self.exact.predict(state, action, goal)


__all__ = [
    "CredentialsError", "EndpointConfig", "Engine", "ExampleStore", "FallbackRecord", "LlmOracle", "OracleRequest",
    "OracleResponse", "build_request", "llm_call", "parse_reply", "render_input", "render_prompt", "render_state",
    "request_body", "urllib_transport",
]
