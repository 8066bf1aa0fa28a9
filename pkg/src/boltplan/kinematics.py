"""Serial-arm kinematics: DH forward kinematics, geometric Jacobian and
damped-least-squares IK, plus the chassis/arm-base geometry shared with the
differentiable reachability penalty in :mod:`boltplan.reach`.

Lengths are in mm. Inside the DLS update the position rows of the error and
Jacobian are expressed in metres so a single damping constant acts on
comparable scales for translation and rotation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .geometry import Pose6, log_so3, rot_z, wrap_angle


class JointLimitError(ValueError):
    pass


@dataclass(frozen=True)
class DHTable:
    a: tuple[float, ...]
    alpha: tuple[float, ...]
    d: tuple[float, ...]
    theta_offset: tuple[float, ...] = (0.0,) * 6
    limits: tuple[tuple[float, float], ...] = ((-2 * np.pi, 2 * np.pi),) * 6

    def __post_init__(self):
        for name in ("a", "alpha", "d", "theta_offset", "limits"):
            if len(getattr(self, name)) != 6:
                raise ValueError(f"DH table needs six rows, {name} has {len(getattr(self, name))}")
        for lo, hi in self.limits:
            if not lo < hi:
                raise ValueError(f"bad joint limit ({lo}, {hi})")

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.limits])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.limits])

    @classmethod
    def from_dict(cls, data: dict) -> DHTable:
        kw = {k: tuple(data[k]) for k in ("a", "alpha", "d") }
        if "theta_offset" in data:
            kw["theta_offset"] = tuple(data["theta_offset"])
        if "limits" in data:
            kw["limits"] = tuple(tuple(map(float, lim)) for lim in data["limits"])
        return cls(**kw)


DEFAULT_DH = DHTable(
    a=(0.0, -425.0, -392.2, 0.0, 0.0, 0.0),
    alpha=(np.pi / 2, 0.0, 0.0, np.pi / 2, -np.pi / 2, 0.0),
    d=(162.5, 0.0, 0.0, 133.3, 99.7, 99.6),
)

# arm base sits on the chassis top plate, centred on the chassis origin
ARM_MOUNT_HEIGHT_MM = 400.0
# flange-to-sleeve-tip distance; IK targets place the tip on the bolt head
TOOL_LENGTH_MM = 120.0
R_MIN_MM = 300.0
R_MAX_MM = 850.0


@dataclass(frozen=True)
class ChassisPose:
    x: float
    y: float
    heading: float

    def __post_init__(self):
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.heading])


@dataclass(frozen=True)
class IkParams:
    damping: float = 0.1
    max_iterations: int = 300
    tol_pos: float = 1e-3  # mm
    tol_rot: float = 1e-5  # rad
    max_step_error_m: float = 0.1  # clamp on the position error fed to one DLS step

    def __post_init__(self):
        if self.damping <= 0:
            raise ValueError("damping must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class IkResult:
    joints: np.ndarray
    residual: tuple[float, float]  # (position mm, orientation rad)
    converged: bool
    iterations: int
    seed_index: int = 0


def _dh_transforms(q: np.ndarray, dh: DHTable) -> np.ndarray:
    """Per-joint DH transforms, shape (..., 6, 4, 4) for q of shape (..., 6)."""
    q = np.asarray(q, dtype=float)
    th = q + np.asarray(dh.theta_offset)
    al = np.asarray(dh.alpha)
    a = np.asarray(dh.a)
    d = np.asarray(dh.d)
    ct, st = np.cos(th), np.sin(th)
    ca, sa = np.broadcast_to(np.cos(al), th.shape), np.broadcast_to(np.sin(al), th.shape)
    A = np.zeros(th.shape + (4, 4))
    A[..., 0, 0] = ct
    A[..., 0, 1] = -st * ca
    A[..., 0, 2] = st * sa
    A[..., 0, 3] = a * ct
    A[..., 1, 0] = st
    A[..., 1, 1] = ct * ca
    A[..., 1, 2] = -ct * sa
    A[..., 1, 3] = a * st
    A[..., 2, 1] = sa
    A[..., 2, 2] = ca
    A[..., 2, 3] = np.broadcast_to(d, th.shape)
    A[..., 3, 3] = 1.0
    return A


def frames(q: np.ndarray, dh: DHTable) -> np.ndarray:
    """Cumulative frames T_0..T_6 in the arm-base frame, shape (..., 7, 4, 4)."""
    A = _dh_transforms(q, dh)
    out = np.empty(A.shape[:-3] + (7, 4, 4))
    out[..., 0, :, :] = np.eye(4)
    for i in range(6):
        out[..., i + 1, :, :] = out[..., i, :, :] @ A[..., i, :, :]
    return out


def check_limits(q, dh: DHTable) -> None:
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != 6:
        raise ValueError("joint vector must have six entries")
    bad = (q < dh.lower - 1e-12) | (q > dh.upper + 1e-12)
    if np.any(bad):
        raise JointLimitError(f"joint limit violation at joints {np.nonzero(bad)[-1].tolist()}")


def fk_matrix(q, dh: DHTable = DEFAULT_DH) -> np.ndarray:
    check_limits(q, dh)
    return frames(q, dh)[..., 6, :, :]


def fk(q, dh: DHTable = DEFAULT_DH) -> Pose6:
    return Pose6.from_matrix(fk_matrix(q, dh))


def _jacobian_from_frames(F: np.ndarray) -> np.ndarray:
    z = F[..., :6, :3, 2]
    p = F[..., :6, :3, 3]
    pe = F[..., 6:7, :3, 3]
    J = np.empty(F.shape[:-3] + (6, 6))
    J[..., :3, :] = np.swapaxes(np.cross(z, pe - p), -1, -2)
    J[..., 3:, :] = np.swapaxes(z, -1, -2)
    return J


def jacobian(q, dh: DHTable = DEFAULT_DH) -> np.ndarray:
    """Geometric Jacobian (rows: linear mm/rad, angular rad/rad) in the base frame."""
    check_limits(q, dh)
    return _jacobian_from_frames(frames(q, dh))


def _pose_error(T_target: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Stacked (position mm, rotation-vector rad) error, batched over leading dims."""
    ep = T_target[..., :3, 3] - T[..., :3, 3]
    Rerr = T_target[..., :3, :3] @ np.swapaxes(T[..., :3, :3], -1, -2)
    er = _log_so3_batch(Rerr)
    return np.concatenate([ep, er], axis=-1)


def _log_so3_batch(R: np.ndarray) -> np.ndarray:
    cos = np.clip((np.trace(R, axis1=-2, axis2=-1) - 1.0) / 2.0, -1.0, 1.0)
    th = np.arccos(cos)
    v = np.stack([R[..., 2, 1] - R[..., 1, 2], R[..., 0, 2] - R[..., 2, 0], R[..., 1, 0] - R[..., 0, 1]], -1)
    s = np.sin(th)
    small = s < 1e-6
    scale = np.where(small, 0.5, th / (2.0 * np.where(small, 1.0, s)))
    out = v * scale[..., None]
    near_pi = small & (cos < 0)
    if np.any(near_pi):
        idx = np.nonzero(near_pi)
        for k in zip(*idx):
            out[k] = log_so3(R[k])
    return out


@njit(cache=True)
def _frames_kernel(q, a, alpha, d, off, F):
    for r in range(4):
        for c in range(4):
            F[0, r, c] = 1.0 if r == c else 0.0
    A = np.empty((4, 4))
    for i in range(6):
        th = q[i] + off[i]
        ct, st = np.cos(th), np.sin(th)
        ca, sa = np.cos(alpha[i]), np.sin(alpha[i])
        A[0, 0] = ct; A[0, 1] = -st * ca; A[0, 2] = st * sa; A[0, 3] = a[i] * ct
        A[1, 0] = st; A[1, 1] = ct * ca; A[1, 2] = -ct * sa; A[1, 3] = a[i] * st
        A[2, 0] = 0.0; A[2, 1] = sa; A[2, 2] = ca; A[2, 3] = d[i]
        A[3, 0] = 0.0; A[3, 1] = 0.0; A[3, 2] = 0.0; A[3, 3] = 1.0
        F[i + 1] = F[i] @ A


@njit(cache=True)
def _log_rot_kernel(R, out):
    cos = (R[0, 0] + R[1, 1] + R[2, 2] - 1.0) / 2.0
    cos = min(1.0, max(-1.0, cos))
    th = np.arccos(cos)
    s = np.sin(th)
    vx = R[2, 1] - R[1, 2]
    vy = R[0, 2] - R[2, 0]
    vz = R[1, 0] - R[0, 1]
    if s > 1e-6:
        k = th / (2.0 * s)
        out[0] = vx * k; out[1] = vy * k; out[2] = vz * k
    elif cos > 0:
        out[0] = 0.5 * vx; out[1] = 0.5 * vy; out[2] = 0.5 * vz
    else:
        # rotation by ~pi: axis from the largest diagonal of (R + I) / 2
        B = (R + np.eye(3)) / 2.0
        j = 0
        if B[1, 1] > B[j, j]:
            j = 1
        if B[2, 2] > B[j, j]:
            j = 2
        ax = B[:, j] / np.sqrt(max(B[j, j], 1e-300))
        n = np.sqrt(ax[0] ** 2 + ax[1] ** 2 + ax[2] ** 2)
        sgn = 1.0
        if ax[0] * vx + ax[1] * vy + ax[2] * vz < 0:
            sgn = -1.0
        out[0] = sgn * th * ax[0] / n; out[1] = sgn * th * ax[1] / n; out[2] = sgn * th * ax[2] / n


@njit(cache=True)
def _dls_kernel(Tt, q0, a, alpha, d, off, lo, hi, lam, max_iter, tol_pos, tol_rot, max_step):
    q = q0.copy()
    for i in range(6):
        q[i] = min(hi[i], max(lo[i], q[i]))
    F = np.empty((7, 4, 4))
    e = np.empty(6)
    er = np.empty(3)
    J = np.empty((6, 6))
    M = np.empty((6, 6))
    converged = False
    it = 0
    while True:
        _frames_kernel(q, a, alpha, d, off, F)
        for r in range(3):
            e[r] = Tt[r, 3] - F[6, r, 3]
        _log_rot_kernel(np.ascontiguousarray(Tt[:3, :3]) @ np.ascontiguousarray(F[6, :3, :3].T), er)
        e[3] = er[0]; e[4] = er[1]; e[5] = er[2]
        ep = np.sqrt(e[0] ** 2 + e[1] ** 2 + e[2] ** 2)
        eo = np.sqrt(e[3] ** 2 + e[4] ** 2 + e[5] ** 2)
        if ep < tol_pos and eo < tol_rot:
            converged = True
            break
        if it >= max_iter:
            break
        pe = F[6, :3, 3]
        for i in range(6):
            z = F[i, :3, 2]
            r = pe - F[i, :3, 3]
            J[0, i] = (z[1] * r[2] - z[2] * r[1]) * 1e-3
            J[1, i] = (z[2] * r[0] - z[0] * r[2]) * 1e-3
            J[2, i] = (z[0] * r[1] - z[1] * r[0]) * 1e-3
            J[3, i] = z[0]; J[4, i] = z[1]; J[5, i] = z[2]
        es = e.copy()
        sc = 1e-3 * min(1.0, max_step / max(ep * 1e-3, 1e-300))
        es[0] *= sc; es[1] *= sc; es[2] *= sc
        M[:, :] = J @ J.T
        for i in range(6):
            M[i, i] += lam * lam
        dq = J.T @ np.linalg.solve(M, es)
        for i in range(6):
            q[i] = min(hi[i], max(lo[i], q[i] + dq[i]))
        it += 1
    return q, e, converged, it


def ik_dls_batch(T_target: np.ndarray, q0: np.ndarray, params: IkParams = IkParams(),
                 dh: DHTable = DEFAULT_DH):
    """DLS over a batch: T_target (B,4,4), q0 (B,6).

    Returns (q, err (B,6), converged (B,), iterations (B,)).
    """
    T_target = np.ascontiguousarray(T_target, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    B = q0.shape[0]
    a, al, d, off = (np.asarray(v, dtype=float) for v in (dh.a, dh.alpha, dh.d, dh.theta_offset))
    lo, hi = dh.lower, dh.upper
    qs = np.empty((B, 6))
    errs = np.empty((B, 6))
    conv = np.zeros(B, dtype=bool)
    iters = np.zeros(B, dtype=int)
    for b in range(B):
        qs[b], errs[b], conv[b], iters[b] = _dls_kernel(
            T_target[b], q0[b], a, al, d, off, lo, hi, float(params.damping), int(params.max_iterations),
            float(params.tol_pos), float(params.tol_rot), float(params.max_step_error_m))
    return qs, errs, conv, iters


def ik_dls(target: Pose6, seed_joints, params: IkParams = IkParams(), dh: DHTable = DEFAULT_DH) -> IkResult:
    """Damped-least-squares IK from one seed; non-convergence is a normal result."""
    T = target.matrix()[None]
    q, err, conv, iters = ik_dls_batch(T, np.asarray(seed_joints, dtype=float)[None], params, dh)
    return IkResult(q[0], (float(np.linalg.norm(err[0, :3])), float(np.linalg.norm(err[0, 3:]))),
                    bool(conv[0]), int(iters[0]))


# -- chassis / bolt geometry -------------------------------------------------

# (joint-1 offset from the aimed azimuth, q2..q6); greedy coverage picks over
# random non-singular targets, plus the plain tool-down posture
H = np.pi / 2
SEED_POSTURES = np.array([
    [0.0, -H, H, -H, -H, 0.0],
    [0.0, -2.3, -2.0, H, H, 0.0],
    [np.pi, -H, 2.0, H, H, 0.0],
    [0.0, -2.3, -1.0, -H, -H, 0.0],
    [0.0, -H, 1.0, H, H, 0.0],
    [0.0, -0.8, 1.0, -H, -H, 0.0],
    [np.pi, -H, -2.0, -H, H, 0.0],
    [np.pi, -0.8, -1.0, H, -H, 0.0],
])
SHOULDER_OFFSET_MM = 133.3


def seed_base_angle(p_rel) -> float:
    """Joint-1 angle that points the arm plane at a base-frame position."""
    rho = float(np.hypot(p_rel[0], p_rel[1]))
    off = np.arcsin(np.clip(SHOULDER_OFFSET_MM / max(rho, 1e-9), -1.0, 1.0))
    return wrap_angle(np.arctan2(p_rel[1], p_rel[0]) + np.pi - off)


def ik_seeds(T_target: np.ndarray) -> np.ndarray:
    """Eight fixed seed postures, with joint 1 aimed at the target's azimuth."""
    q1 = seed_base_angle(T_target[:3, 3])
    seeds = SEED_POSTURES.copy()
    seeds[:, 0] = [wrap_angle(q1 + o) for o in SEED_POSTURES[:, 0]]
    return seeds


def arm_base_matrix(chassis: ChassisPose) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = rot_z(chassis.heading)
    T[:3, 3] = (chassis.x, chassis.y, ARM_MOUNT_HEIGHT_MM)
    return T


def tool_target_matrix(bolt: Pose6, standoff: float = TOOL_LENGTH_MM) -> np.ndarray:
    """Flange pose that puts the sleeve axis on the bolt axis, facing it, ``standoff`` away."""
    Rb = bolt.R
    R = Rb @ np.diag([1.0, -1.0, -1.0])  # rotate pi about bolt x: flange z = -bolt z
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = bolt.p + standoff * Rb[:, 2]
    return T


def bolt_in_base(chassis: ChassisPose, bolt: Pose6, standoff: float = TOOL_LENGTH_MM) -> np.ndarray:
    return np.linalg.inv(arm_base_matrix(chassis)) @ tool_target_matrix(bolt, standoff)


def solve_multi(T_target: np.ndarray, params: IkParams = IkParams(), dh: DHTable = DEFAULT_DH) -> IkResult:
    """Run DLS from every fixed seed; lowest residual wins, ties by seed index."""
    seeds = ik_seeds(T_target)
    B = len(seeds)
    q, err, conv, iters = ik_dls_batch(np.broadcast_to(T_target, (B, 4, 4)), seeds, params, dh)
    res = np.linalg.norm(err[:, :3], axis=1) * 1e-3 + np.linalg.norm(err[:, 3:], axis=1)
    # converged solutions always rank ahead of unconverged ones
    key = np.where(conv, 0, 1)
    order = np.lexsort((np.arange(B), res, key))
    k = int(order[0])
    return IkResult(q[k], (float(np.linalg.norm(err[k, :3])), float(np.linalg.norm(err[k, 3:]))),
                    bool(conv[k]), int(iters[k]), seed_index=k)


# upper bound on flange distance from the arm-base origin; anything beyond is infeasible
MAX_FLANGE_REACH_MM = float(np.sum(np.abs(DEFAULT_DH.a)) + np.sum(np.abs(DEFAULT_DH.d)))


def verify_chassis(chassis: ChassisPose, bolt: Pose6, params: IkParams = IkParams(),
                   dh: DHTable = DEFAULT_DH) -> IkResult:
    """Kinematic certificate for servicing ``bolt`` from ``chassis``."""
    T = bolt_in_base(chassis, bolt)
    reach = float(np.linalg.norm(T[:3, 3]))
    if dh == DEFAULT_DH and reach > MAX_FLANGE_REACH_MM:
        return IkResult(np.zeros(6), (reach - MAX_FLANGE_REACH_MM, 0.0), False, 0, seed_index=0)
    return solve_multi(T, params, dh)
