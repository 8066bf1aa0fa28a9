"""Probabilistic predicates over simulated sensor observations.

Each predicate is a logistic classifier over a short hand-built feature vector. A snapshot
evaluates every predicate on every visible bolt, merges the robot's self-knowledge at
probability 1, and can be thresholded into a closed-world planning state.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import textformat
from .geometry import Pose6
from .scene import (
    CAMERA_OFFSET_MM,
    ALIGN_TOL_MM,
    ALIGN_TOL_RAD,
    MATED_MAX_STANDOFF_MM,
    Observation,
    alignment_error,
)

log = logging.getLogger(__name__)

NO_SLEEVE_GAP_MM = 5.0  # also the cap on measured gaps
PARAMS_KIND = "boltplan-predicates"


class PerceptionError(ValueError):
    pass


class DegenerateSamplesError(PerceptionError):
    pass


@dataclass(frozen=True)
class PredicateSchema:
    name: str
    sorts: tuple[str, ...]
    features: tuple[str, ...]
    featurizer: Callable[[Observation, tuple[str, ...]], np.ndarray] = field(compare=False, repr=False)


@dataclass(frozen=True)
class ClassifierParams:
    weights: np.ndarray
    bias: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or not np.all(np.isfinite(w)) or not np.isfinite(self.bias):
            raise PerceptionError("classifier parameters must be a finite vector and bias")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))


@dataclass(frozen=True)
class QuasiSymbolicState:
    entries: dict  # atom -> probability
    tick: int = 0

    def __post_init__(self):
        for atom, p in self.entries.items():
            if not 0.0 <= p <= 1.0:
                raise PerceptionError(f"probability of {atom} outside [0, 1]: {p}")

    def probability(self, atom: tuple) -> float:
        return float(self.entries.get(atom, 0.0))


# ---------------------------------------------------------------- features

def _detection(obs: Observation, bolt_id: str):
    det = obs.detection(bolt_id)
    if det is None or bolt_id not in obs.pose_measurements:
        raise PerceptionError(f"bolt {bolt_id} is not in the observation")
    return det, obs.pose_measurements[bolt_id]


def _tip(obs: Observation) -> Pose6:
    cam = obs.camera_pose
    return Pose6.from_rt(cam.R, cam.p + CAMERA_OFFSET_MM * cam.R[:, 2])


def _f_target_aim(obs, args):
    det, meas = _detection(obs, args[0])
    cam = obs.camera_pose
    v = cam.R.T @ (meas.p - cam.p)
    return np.array([float(np.hypot(v[0], v[1])), float(v[2]), det.confidence])


def alignment_ratio(lateral: float, axial: float, angle: float) -> float:
    """Largest tolerance usage of a tip pose; at most 1 means inside the mating envelope."""
    return max(lateral / ALIGN_TOL_MM, angle / ALIGN_TOL_RAD, axial / MATED_MAX_STANDOFF_MM,
               -axial / ALIGN_TOL_MM)


def _f_aligned(obs, args):
    det, meas = _detection(obs, args[0])
    lat, axial, ang = alignment_error(_tip(obs), meas)
    excess = max(0.0, axial - MATED_MAX_STANDOFF_MM)
    return np.array([lat, ang, excess, min(alignment_ratio(lat, axial, ang), 10.0), det.head_present,
                     det.confidence])


def _f_sleeve_matched(obs, args):
    det, _ = _detection(obs, args[0])
    s = obs.rack_view
    if s is None:
        return np.array([NO_SLEEVE_GAP_MM, 1.0, det.confidence])
    return np.array([min(abs(s.size - det.size_mm), NO_SLEEVE_GAP_MM), 0.0 if s.kind == det.head_kind else 1.0, det.confidence])


def _f_corroded(obs, args):
    return np.array([_detection(obs, args[0])[0].corrosion])


def _f_obstructed(obs, args):
    return np.array([_detection(obs, args[0])[0].clearance_mm])


def _f_engaged(obs, args):
    from .scene import INSERT_DEPTH_MM

    _detection(obs, args[0])
    on = obs.robot.inserted == args[0]
    return np.array([float(obs.force_torque[2]) if on else 0.0, INSERT_DEPTH_MM if on else 0.0])


def _f_head(obs, args):
    det, _ = _detection(obs, args[0])
    return np.array([det.protrusion_mm, det.head_present])


def _f_removed(obs, args):
    return np.array([_detection(obs, args[0])[0].head_present])


REGISTRY: dict[str, PredicateSchema] = {
    s.name: s
    for s in (
        PredicateSchema("target_aim", ("bolt",), ("lateral_mm", "depth_mm", "confidence"), _f_target_aim),
        PredicateSchema("aligned", ("bolt",),
                        ("lateral_mm", "angle_rad", "excess_standoff_mm", "tolerance_ratio", "head_present",
                         "confidence"), _f_aligned),
        PredicateSchema("sleeve_matched", ("bolt",), ("size_gap_mm", "kind_mismatch", "confidence"),
                        _f_sleeve_matched),
        PredicateSchema("corroded", ("bolt",), ("corrosion",), _f_corroded),
        PredicateSchema("obstructed", ("bolt",), ("clearance_mm",), _f_obstructed),
        PredicateSchema("engaged", ("bolt",), ("force_z_n", "insertion_depth_mm"), _f_engaged),
        PredicateSchema("loosened", ("bolt",), ("protrusion_mm", "head_present"), _f_head),
        # Fastening state is observable too and the planner needs both ends of it.
        PredicateSchema("fastened", ("bolt",), ("protrusion_mm", "head_present"), _f_head),
        PredicateSchema("removed", ("bolt",), ("head_present",), _f_removed),
    )
}
PERCEPTION_PREDICATES = ("target_aim", "sleeve_matched", "aligned", "corroded", "obstructed", "engaged", "loosened")


def featurize(obs: Observation, predicate: PredicateSchema | str, args: Sequence[str]) -> np.ndarray:
    schema = REGISTRY[predicate] if isinstance(predicate, str) else predicate
    args = tuple(args)
    if len(args) != len(schema.sorts):
        raise PerceptionError(f"{schema.name} takes {len(schema.sorts)} argument(s), got {len(args)}")
    f = schema.featurizer(obs, args)
    if len(f) != len(schema.features):
        raise PerceptionError(f"{schema.name} featurizer returned {len(f)} values")
    return f


def _sigmoid(z: np.ndarray | float):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def eval_predicate(params: ClassifierParams, features) -> float:
    f = np.asarray(features, dtype=float)
    if f.shape != params.weights.shape:
        raise PerceptionError(f"expected {params.weights.shape[0]} features, got {f.shape}")
    return float(_sigmoid(params.weights @ f + params.bias))


# ---------------------------------------------------------------- state

def snapshot(obs: Observation, registry: dict[str, PredicateSchema] | None = None,
             params: dict[str, ClassifierParams] | None = None, tick: int = 0) -> QuasiSymbolicState:
    registry = REGISTRY if registry is None else registry
    params = default_params() if params is None else params
    entries = {atom: 1.0 for atom in obs.known_facts}
    for bid in obs.visible_ids:
        for name, schema in registry.items():
            if name not in params:
                continue
            entries[(name, bid)] = eval_predicate(params[name], featurize(obs, schema, (bid,)))
    return QuasiSymbolicState(entries, tick)


def binarize(q: QuasiSymbolicState, tau: float = 0.5) -> frozenset:
    """Atoms whose probability reaches ``tau``; equality counts as true."""
    if not 0.0 < tau < 1.0:
        raise PerceptionError("threshold must lie in (0, 1)")
    return frozenset(a for a, p in q.entries.items() if p >= tau)


def restrict_to(state: Iterable[tuple], keep_bolts: Iterable[str], all_bolts: Iterable[str]) -> frozenset:
    """Drop atoms that mention a bolt outside ``keep_bolts``."""
    keep, every = set(keep_bolts), set(all_bolts)
    return frozenset(a for a in state if not any(x in every and x not in keep for x in a[1:]))


# ---------------------------------------------------------------- training

@dataclass(frozen=True)
class PredicateTrainConfig:
    learning_rate: float = 0.5
    momentum: float = 0.9
    steps: int = 3000
    l2: float = 1e-6
    seed: int = 0


def train_predicate(samples: Sequence[tuple[Sequence[float], bool]],
                    config: PredicateTrainConfig = PredicateTrainConfig()) -> ClassifierParams:
    """Full-batch gradient descent (Nesterov momentum) on the logistic loss with standardized inputs.

    The standardization is folded back into the returned weights so evaluation needs raw
    features only.
    """
    if len(samples) < 2:
        raise DegenerateSamplesError("need at least two samples")
    X = np.array([np.asarray(f, dtype=float) for f, _ in samples])
    y = np.array([1.0 if lab else 0.0 for _, lab in samples])
    if y.min() == y.max():
        raise DegenerateSamplesError("samples contain a single class")
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd < 1e-12] = 1.0
    Z = (X - mu) / sd
    rng = np.random.default_rng(config.seed)
    theta = np.concatenate([rng.normal(0.0, 0.01, X.shape[1]), [0.0]])
    Z1 = np.column_stack([Z, np.ones(len(y))])
    reg = np.full(len(theta), config.l2)
    reg[-1] = 0.0
    vel = np.zeros_like(theta)
    n = len(y)
    for _ in range(config.steps):
        look = theta + config.momentum * vel
        g = Z1.T @ (_sigmoid(Z1 @ look) - y) / n + reg * look
        vel = config.momentum * vel - config.learning_rate * g
        theta = theta + vel
    w, b = theta[:-1], float(theta[-1])
    return ClassifierParams(w / sd, b - float((w / sd) @ mu))


def accuracy(params: ClassifierParams, samples: Sequence[tuple[Sequence[float], bool]], tau: float = 0.5) -> float:
    if not samples:
        return float("nan")
    hits = sum((eval_predicate(params, f) >= tau) == bool(lab) for f, lab in samples)
    return hits / len(samples)


def save_params(path: str | Path, params: dict[str, ClassifierParams], meta: dict | None = None) -> None:
    arrays = {}
    for name in sorted(params):
        arrays[f"{name}.w"] = params[name].weights
        arrays[f"{name}.b"] = np.array([params[name].bias])
    textformat.save(path, PARAMS_KIND, arrays, {k: str(v) for k, v in (meta or {}).items()})


def _params_from_arrays(arrays: dict) -> dict[str, ClassifierParams]:
    out = {}
    for key in arrays:
        if key.endswith(".w"):
            name = key[:-2]
            out[name] = ClassifierParams(arrays[key], float(arrays[f"{name}.b"][0]))
    return out


def load_params(path: str | Path) -> dict[str, ClassifierParams]:
    _, _, arrays = textformat.load(path, PARAMS_KIND)
    return _params_from_arrays(arrays)


@lru_cache(maxsize=1)
def default_params() -> dict[str, ClassifierParams]:
    text = resources.files("boltplan.data").joinpath("predicates.txt").read_text()
    _, _, arrays = textformat.loads(text, PARAMS_KIND)
    return _params_from_arrays(arrays)


# ---------------------------------------------------------------- logged samples

def append_samples(path: str | Path, records: Iterable[dict]) -> int:
    """Append sample records (predicate, args, features, label, ...) as JSON lines."""
    n = 0
    with open(path, "a", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
            n += 1
    return n


def read_samples(path: str | Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise PerceptionError(f"line {i}: {e.msg}") from e
    return out


def cross_validated(records: Iterable[dict]) -> dict[str, list[tuple[np.ndarray, bool]]]:
    """Training samples from run logs.

    A record carries the camera's probability and, when a primitive outcome confirmed or
    refuted the literal, a ``force_label``. Only outcome-confirmed records become samples,
    labelled by the outcome.
    """
    out: dict[str, list] = {}
    for r in records:
        lab = r.get("force_label")
        if lab is None:
            continue
        out.setdefault(r["predicate"], []).append((np.asarray(r["features"], dtype=float), bool(lab)))
    return out


def sample_record(obs: Observation, predicate: str, bolt_id: str, prob: float, force_label: bool | None) -> dict:
    return {
        "predicate": predicate,
        "args": [bolt_id],
        "features": [float(v) for v in featurize(obs, predicate, (bolt_id,))],
        "camera_probability": float(prob),
        "force_label": force_label,
    }


__all__ = [
    "ClassifierParams", "DegenerateSamplesError", "PERCEPTION_PREDICATES", "PerceptionError", "PredicateSchema",
    "PredicateTrainConfig", "QuasiSymbolicState", "REGISTRY", "accuracy", "alignment_ratio", "append_samples",
    "binarize", "cross_validated", "default_params", "eval_predicate", "featurize", "load_params", "read_samples",
    "restrict_to", "sample_record", "save_params", "snapshot", "train_predicate",
]
