"""Differentiable reachability penalty for a chassis placement.

The penalty combines a distance band on the bolt position in the arm-base
frame with the residual of a fixed number of damped-least-squares iterations
unrolled inside the autodiff graph. Everything runs in float64 JAX so
gradients flow back to the chassis pose (and from there into the placement
network).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial

import jax

jax.config.update("jax_enable_x64", True)

import jax.numpy as jnp  # noqa: E402
import numpy as np  # noqa: E402

from .geometry import Pose6  # noqa: E402
from .kinematics import (  # noqa: E402
    ARM_MOUNT_HEIGHT_MM,
    DEFAULT_DH,
    R_MAX_MM,
    R_MIN_MM,
    SEED_POSTURES,
    SHOULDER_OFFSET_MM,
    TOOL_LENGTH_MM,
    ChassisPose,
    DHTable,
)

LENGTH_SCALE_MM = 100.0


@dataclass(frozen=True)
class PenaltyParams:
    r_min: float = R_MIN_MM
    r_max: float = R_MAX_MM
    unrolled_iterations: int = 10
    damping: float = 0.1
    ik_weight: float = 0.01
    ik_tolerance: float = 0.05  # residual below this (dm / rad units) costs nothing
    max_step_error_m: float = 0.1


def fk_frames(q, dh: DHTable = DEFAULT_DH):
    """Cumulative frames T_0..T_6 for q of shape (B, 6), stacked as (B, 7, 4, 4)."""
    B = q.shape[0]
    th = q + jnp.asarray(dh.theta_offset)
    ct, st = jnp.cos(th), jnp.sin(th)
    ca = jnp.broadcast_to(jnp.cos(jnp.asarray(dh.alpha)), th.shape)
    sa = jnp.broadcast_to(jnp.sin(jnp.asarray(dh.alpha)), th.shape)
    a = jnp.broadcast_to(jnp.asarray(dh.a), th.shape)
    d = jnp.broadcast_to(jnp.asarray(dh.d), th.shape)
    z, o = jnp.zeros_like(th), jnp.ones_like(th)
    A = jnp.stack([ct, -st * ca, st * sa, a * ct,
                   st, ct * ca, -ct * sa, a * st,
                   z, sa, ca, d,
                   z, z, z, o], -1).reshape(B, 6, 4, 4)
    T = jnp.broadcast_to(jnp.eye(4), (B, 4, 4))
    out = [T]
    for i in range(6):
        T = T @ A[:, i]
        out.append(T)
    return jnp.stack(out, 1)


def log_rot(R):
    """Rotation vector (quaternion log map) via angle = atan2(|sin|, cos); safe at zero."""
    v = 0.5 * jnp.stack([R[..., 2, 1] - R[..., 1, 2], R[..., 0, 2] - R[..., 2, 0], R[..., 1, 0] - R[..., 0, 1]], -1)
    c = 0.5 * (R[..., 0, 0] + R[..., 1, 1] + R[..., 2, 2] - 1.0)
    s2 = (v * v).sum(-1)
    small = s2 < 1e-20
    s = jnp.sqrt(jnp.where(small, 1.0, s2))
    factor = jnp.where(small, 1.0, jnp.arctan2(s, c) / s)
    return v * factor[..., None]


def pose_error(Tt, T):
    ep = Tt[:, :3, 3] - T[:, :3, 3]
    er = log_rot(Tt[:, :3, :3] @ jnp.swapaxes(T[:, :3, :3], -1, -2))
    return jnp.concatenate([ep, er], -1)


def geometric_jacobian(F):
    z = F[:, :6, :3, 2]
    p = F[:, :6, :3, 3]
    pe = F[:, 6:7, :3, 3]
    return jnp.swapaxes(jnp.concatenate([jnp.cross(z, pe - p), z], -1), -1, -2)


def _rot_z(theta):
    c, s = jnp.cos(theta), jnp.sin(theta)
    z, o = jnp.zeros_like(theta), jnp.ones_like(theta)
    return jnp.stack([jnp.stack([c, -s, z], -1), jnp.stack([s, c, z], -1), jnp.stack([z, z, o], -1)], -2)


def penalty_terms(chassis, bolt_p, bolt_R, params: PenaltyParams = PenaltyParams(), dh: DHTable = DEFAULT_DH):
    """Per-sample penalty and its parts for chassis (B, 3) = (x mm, y mm, heading rad),
    bolt positions (B, 3) and rotations (B, 3, 3)."""
    B = chassis.shape[0]
    RzT = jnp.swapaxes(_rot_z(chassis[:, 2]), -1, -2)
    base = jnp.stack([chassis[:, 0], chassis[:, 1], jnp.full((B,), ARM_MOUNT_HEIGHT_MM)], -1)
    p_rel = jnp.einsum("bij,bj->bi", RzT, bolt_p - base)
    dist = jnp.sqrt((p_rel * p_rel).sum(-1))
    L = LENGTH_SCALE_MM
    band = (jnp.maximum(dist - params.r_max, 0.0) / L) ** 2 + (jnp.maximum(params.r_min - dist, 0.0) / L) ** 2

    Rt = RzT @ bolt_R @ jnp.diag(jnp.array([1.0, -1.0, -1.0]))
    pt = jnp.einsum("bij,bj->bi", RzT, bolt_p + TOOL_LENGTH_MM * bolt_R[:, :, 2] - base)
    top = jnp.concatenate([Rt, pt[..., None]], -1)
    bottom = jnp.broadcast_to(jnp.array([0.0, 0.0, 0.0, 1.0]), (B, 1, 4))
    Tt = jnp.concatenate([top, bottom], -2)

    rho = jnp.sqrt(pt[:, 0] ** 2 + pt[:, 1] ** 2)
    q1 = jnp.arctan2(pt[:, 1], pt[:, 0]) + np.pi - jnp.arcsin(jnp.minimum(SHOULDER_OFFSET_MM / rho, 0.999))
    q = jnp.concatenate([q1[:, None], jnp.broadcast_to(jnp.asarray(SEED_POSTURES[0, 1:]), (B, 5))], -1)
    lo, hi = jnp.asarray(dh.lower), jnp.asarray(dh.upper)
    scale = jnp.array([1e-3] * 3 + [1.0] * 3)
    eye = jnp.eye(6)
    for _ in range(params.unrolled_iterations):
        F = fk_frames(q, dh)
        e = pose_error(Tt, F[:, 6])
        pn = jnp.sqrt((e[:, :3] ** 2).sum(-1) + 1e-30) * 1e-3
        step = jnp.minimum(params.max_step_error_m / pn, 1.0)
        es = e * scale * jnp.concatenate([jnp.broadcast_to(step[:, None], (B, 3)), jnp.ones((B, 3))], -1)
        J = geometric_jacobian(F) * scale[:, None]
        M = J @ jnp.swapaxes(J, -1, -2) + params.damping**2 * eye
        dq = jnp.einsum("bji,bj->bi", J, jnp.linalg.solve(M, es[..., None])[..., 0])
        q = jnp.clip(q + dq, lo, hi)
    e = pose_error(Tt, fk_frames(q, dh)[:, 6])
    res = jnp.sqrt(((e[:, :3] / L) ** 2).sum(-1) + (e[:, 3:] ** 2).sum(-1) + 1e-30)
    ik = params.ik_weight * jnp.maximum(res - params.ik_tolerance, 0.0) ** 2
    return band + ik, {"band": band, "ik": ik, "residual": res, "distance": dist}


def penalty_batch(chassis, bolt_p, bolt_R, params: PenaltyParams = PenaltyParams(), dh: DHTable = DEFAULT_DH):
    return penalty_terms(chassis, bolt_p, bolt_R, params, dh)[0]


@partial(jax.jit, static_argnums=(3, 4))
def _penalty_and_grad(c, p, R, params, dh):
    return jax.value_and_grad(lambda cc: penalty_batch(cc, p, R, params, dh).sum())(c)


def reachability_penalty(chassis: ChassisPose, bolt: Pose6, dh: DHTable = DEFAULT_DH,
                         params: PenaltyParams = PenaltyParams()) -> tuple[float, np.ndarray]:
    """(value, d value / d (x, y, heading)) for a single placement."""
    c = jnp.asarray(chassis.as_array()).reshape(1, 3)
    v, g = _penalty_and_grad(c, jnp.asarray(bolt.p).reshape(1, 3), jnp.asarray(bolt.R).reshape(1, 3, 3), params, dh)
    return float(v), np.asarray(g[0])
