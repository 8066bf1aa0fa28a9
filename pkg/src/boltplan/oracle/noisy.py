from __future__ import annotations

import numpy as np

from .base import Effect, Feasibility

_FLIP = {Feasibility.YES: Feasibility.NO, Feasibility.NO: Feasibility.YES,
         Effect.SURE: Effect.LIKELY, Effect.LIKELY: Effect.SURE}


class NoisyOracle:
    """Flips each verdict with probability ``flip_rate`` and shuffles proposals."""

    stochastic = True

    def __init__(self, inner, flip_rate: float, rng: np.random.Generator,
                 engines: tuple[str, ...] = ("check", "predict"), permute: bool = True):
        if not 0.0 <= flip_rate <= 1.0:
            raise ValueError("flip_rate must lie in [0, 1]")
        self.inner = inner
        self.flip_rate = flip_rate
        self.rng = rng
        self.engines = frozenset(engines)
        self.permute = permute
        self.calls = 0
        self.flips = 0

    def _maybe_flip(self, verdict, engine: str):
        if engine not in self.engines:
            return verdict
        self.calls += 1
        if self.rng.random() < self.flip_rate:
            self.flips += 1
            return _FLIP[verdict]
        return verdict

    def propose(self, state, goal, actions, width):
        out = list(self.inner.propose(state, goal, actions, width))
        if self.permute and len(out) > 1:
            out = [out[i] for i in self.rng.permutation(len(out))]
        return out

    def check(self, state, action):
        return self._maybe_flip(self.inner.check(state, action), "check")

    def predict(self, state, action, goal):
        return self._maybe_flip(self.inner.predict(state, action, goal), "predict")


def noisy_wrap(inner, flip_rate: float, rng: np.random.Generator, **kwargs) -> NoisyOracle:
    return NoisyOracle(inner, flip_rate, rng, **kwargs)
