"""Chassis placement network trained only from kinematic penalties.

The network never sees a labelled chassis pose: training draws bolt poses,
predicts a placement, and back-propagates :func:`boltplan.reach.penalty_batch`.
Placements are then certified by the full multi-seed IK in
:func:`boltplan.kinematics.verify_chassis`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from . import textformat
from .geometry import Pose6, wrap_angle
from .kinematics import DEFAULT_DH, ChassisPose, DHTable, IkParams, IkResult, verify_chassis
from .reach import PenaltyParams, penalty_batch

log = logging.getLogger(__name__)

FIELD_SIZE_MM = 2000.0
FIELD_HEIGHT_MM = 400.0
# predicted (x, y) is an offset from the bolt, in units of this length
OFFSET_SCALE_MM = 500.0
# random-baseline sampling rectangle: the bolt field plus 1 m of floor on every side
DEFAULT_REGION = (-1000.0, FIELD_SIZE_MM + 1000.0, -1000.0, FIELD_SIZE_MM + 1000.0)


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"loss became non-finite ({loss}) at step {step}")
        self.step = step
        self.loss = loss


@dataclass
class MlpParameters:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need matching, non-empty weight and bias lists")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape[0] != b.shape[0]:
                raise ValueError(f"layer {i}: weight rows {W.shape[0]} != bias size {b.shape[0]}")
            if i and W.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i}: input size mismatch")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i}: non-finite entries")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    def copy(self) -> MlpParameters:
        return MlpParameters([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(self.weights, self.biases)])

    def with_flat(self, v: np.ndarray) -> MlpParameters:
        Ws, bs, k = [], [], 0
        for W, b in zip(self.weights, self.biases):
            Ws.append(v[k:k + W.size].reshape(W.shape).copy())
            k += W.size
            bs.append(v[k:k + b.size].copy())
            k += b.size
        return MlpParameters(Ws, bs)

    def save(self, path: str | Path) -> None:
        arrays = {}
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"W{i}"] = W
            arrays[f"b{i}"] = b
        textformat.save(path, "rpsn", arrays, {"layers": ",".join(map(str, self.layer_sizes))})

    @classmethod
    def load(cls, path: str | Path) -> MlpParameters:
        _, meta, arrays = textformat.load(path, kind="rpsn")
        n = len(meta["layers"].split(",")) - 1
        return cls([arrays[f"W{i}"] for i in range(n)], [arrays[f"b{i}"].reshape(-1) for i in range(n)])


def init_params(seed: int, hidden: tuple[int, ...] = (64, 64), n_in: int = 7, n_out: int = 3) -> MlpParameters:
    rng = np.random.default_rng(seed)
    sizes = [n_in, *hidden, n_out]
    Ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        Ws.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
        bs.append(rng.uniform(-bound, bound, fan_out))
    return MlpParameters(Ws, bs)


def encode_bolt(bolt: Pose6) -> np.ndarray:
    half = FIELD_SIZE_MM / 2
    p = bolt.p
    return np.array([(p[0] - half) / half, (p[1] - half) / half,
                     (p[2] - FIELD_HEIGHT_MM / 2) / (FIELD_HEIGHT_MM / 2), *bolt.orientation])


def _decode(raw, bolt_xy):
    """Network output -> chassis (x, y, heading); works for numpy and jax arrays."""
    x = bolt_xy[..., 0] + OFFSET_SCALE_MM * raw[..., 0]
    y = bolt_xy[..., 1] + OFFSET_SCALE_MM * raw[..., 1]
    return x, y, raw[..., 2]


def rpsn_forward(params: MlpParameters, bolt: Pose6) -> ChassisPose:
    h = encode_bolt(bolt)
    n = len(params.weights)
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        h = W @ h + b
        if i < n - 1:
            h = np.tanh(h)
    x, y, th = _decode(h, bolt.p[:2])
    return ChassisPose(float(x), float(y), wrap_angle(float(th)))


def _jax_forward(layers, X):
    h = X
    for i, (W, b) in enumerate(layers):
        h = h @ W.T + b
        if i < len(layers) - 1:
            h = jnp.tanh(h)
    return h


@dataclass
class BoltBatch:
    positions: np.ndarray  # (B, 3)
    rotations: np.ndarray  # (B, 3, 3)
    features: np.ndarray  # (B, 7)

    @classmethod
    def from_poses(cls, bolts: list[Pose6]) -> BoltBatch:
        if not bolts:
            raise ValueError("bolt batch must be non-empty")
        return cls(np.array([b.p for b in bolts]), np.array([b.R for b in bolts]),
                   np.array([encode_bolt(b) for b in bolts]))

    def __len__(self) -> int:
        return len(self.positions)

    def poses(self) -> list[Pose6]:
        return [Pose6.from_rt(R, p) for R, p in zip(self.rotations, self.positions)]


def _loss(layers, features, positions, rotations, w_reg, penalty, dh):
    raw = _jax_forward(layers, features)
    x, y, th = _decode(raw, positions[:, :2])
    pen = penalty_batch(jnp.stack([x, y, th], -1), positions, rotations, penalty, dh)
    reg = sum((W * W).sum() for W, _ in layers)
    return pen.mean() + w_reg * reg, pen


_loss_and_grad = jax.jit(jax.value_and_grad(_loss, has_aux=True), static_argnums=(5, 6))


@partial(jax.jit, static_argnums=(7, 8))
def _sgd_step(layers, velocity, features, positions, rotations, w_reg, lr_mu, penalty, dh):
    (value, pen), grads = jax.value_and_grad(_loss, has_aux=True)(
        layers, features, positions, rotations, w_reg, penalty, dh)
    lr, mu = lr_mu
    # heavy-ball update: v <- mu v + g ; w <- w - lr v
    velocity = jax.tree_util.tree_map(lambda m, g: mu * m + g, velocity, grads)
    layers = jax.tree_util.tree_map(lambda w, m: w - lr * m, layers, velocity)
    return layers, velocity, value, jnp.mean(pen == 0)


def _layers(params: MlpParameters):
    return [(jnp.asarray(W), jnp.asarray(b)) for W, b in zip(params.weights, params.biases)]


def _from_layers(layers) -> MlpParameters:
    return MlpParameters([np.array(W) for W, _ in layers], [np.array(b) for _, b in layers])


def rpsn_loss(params: MlpParameters, bolts: list[Pose6] | BoltBatch, w_reg: float = 1e-5,
              penalty: PenaltyParams = PenaltyParams(), dh: DHTable = DEFAULT_DH):
    """Mean placement penalty over the batch plus weight decay; no labels involved.

    Returns (value, MlpParameters-shaped gradients).
    """
    batch = bolts if isinstance(bolts, BoltBatch) else BoltBatch.from_poses(list(bolts))
    (value, _), grads = _loss_and_grad(_layers(params), jnp.asarray(batch.features), jnp.asarray(batch.positions),
                                       jnp.asarray(batch.rotations), w_reg, penalty, dh)
    return float(value), _from_layers(grads)


def random_bolts(rng: np.random.Generator, n: int) -> BoltBatch:
    """Field sampler: uniform position, axis uniform over the upper hemisphere, uniform spin."""
    z = rng.normal(size=(n, 3))
    z[:, 2] = np.abs(z[:, 2])
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    x = rng.normal(size=(n, 3))
    x -= np.sum(x * z, axis=1, keepdims=True) * z
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    R = np.stack([x, np.cross(z, x), z], axis=-1)
    p = np.column_stack([rng.uniform(0, FIELD_SIZE_MM, n), rng.uniform(0, FIELD_SIZE_MM, n),
                         rng.uniform(0, FIELD_HEIGHT_MM, n)])
    return BoltBatch.from_poses([Pose6.from_rt(Ri, pi) for Ri, pi in zip(R, p)])


def random_bolt(rng: np.random.Generator) -> Pose6:
    b = random_bolts(rng, 1)
    return Pose6.from_rt(b.rotations[0], b.positions[0])


def bolt_sampler(seed: int):
    """Batch sampler for training: call with a batch size, get a BoltBatch."""
    rng = np.random.default_rng(seed)
    return lambda n: random_bolts(rng, n)


@dataclass
class TrainConfig:
    steps: int = 6000
    batch_size: int = 64
    learning_rate: float = 1e-3
    momentum: float = 0.9
    w_reg: float = 1e-5
    seed: int = 0
    log_every: int = 500


def rpsn_train(init: MlpParameters, sampler: Callable[[int], BoltBatch], config: TrainConfig,
               penalty: PenaltyParams = PenaltyParams(), dh: DHTable = DEFAULT_DH):
    """SGD with momentum on the label-free loss. Returns (params, per-step loss list).

    ``sampler(n)`` must return a :class:`BoltBatch` of bolt poses only.
    """
    layers = _layers(init)
    velocity = jax.tree_util.tree_map(jnp.zeros_like, layers)
    lr, mu = config.learning_rate, config.momentum
    curve: list[float] = []
    for step in range(config.steps):
        batch = sampler(config.batch_size)
        layers, velocity, value, zero_frac = _sgd_step(
            layers, velocity, jnp.asarray(batch.features), jnp.asarray(batch.positions),
            jnp.asarray(batch.rotations), config.w_reg, (lr, mu), penalty, dh)
        v = float(value)
        if not np.isfinite(v):
            raise TrainingDiverged(step, v)
        curve.append(v)
        if config.log_every and step % config.log_every == 0:
            log.info("step %d loss %.5f zero-penalty %.3f", step, v, float(zero_frac))
    return _from_layers(layers), curve


@dataclass
class SpeculationResult:
    chassis: ChassisPose
    attempts: int
    verified: bool
    ik: IkResult


def _jitter(base: ChassisPose, k: int, rng: np.random.Generator) -> ChassisPose:
    s = k - 1
    dx, dy = rng.normal(0.0, 30.0 * s, 2)
    dth = rng.normal(0.0, 0.1 * s)
    return ChassisPose(base.x + dx, base.y + dy, base.heading + dth)


def speculate(params: MlpParameters, bolt: Pose6, max_attempts: int, rng: np.random.Generator,
              ik_params: IkParams = IkParams(), dh: DHTable = DEFAULT_DH) -> SpeculationResult:
    """Network proposal first, widening Gaussian jitter on retries, each IK-certified."""
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    base = rpsn_forward(params, bolt)
    for k in range(1, max_attempts + 1):
        cand = base if k == 1 else _jitter(base, k, rng)
        ik = verify_chassis(cand, bolt, ik_params, dh)
        if ik.converged:
            return SpeculationResult(cand, k, True, ik)
    return SpeculationResult(cand, max_attempts, False, ik)


def baseline_random_speculate(bolt: Pose6, max_attempts: int, rng: np.random.Generator,
                              region: tuple[float, float, float, float] = DEFAULT_REGION,
                              ik_params: IkParams = IkParams(), dh: DHTable = DEFAULT_DH) -> SpeculationResult:
    """Uniform chassis samples over ``region`` = (xmin, xmax, ymin, ymax), heading uniform."""
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    xmin, xmax, ymin, ymax = region
    for k in range(1, max_attempts + 1):
        cand = ChassisPose(rng.uniform(xmin, xmax) if xmax > xmin else xmin,
                           rng.uniform(ymin, ymax) if ymax > ymin else ymin,
                           rng.uniform(-np.pi, np.pi))
        ik = verify_chassis(cand, bolt, ik_params, dh)
        if ik.converged:
            return SpeculationResult(cand, k, True, ik)
    return SpeculationResult(cand, max_attempts, False, ik)
