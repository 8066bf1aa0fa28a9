"""Bolt pose refinement: RANSAC plane fits on depth patches feeding a static-target Kalman filter."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose6, exp_so3, log_so3
from .scene import SceneRunner, camera_pose, tool_pose_for

log = logging.getLogger(__name__)


class EstimationError(ValueError):
    pass


class BoltLostError(RuntimeError):
    def __init__(self, bolt_id: str, iteration: int):
        super().__init__(f"bolt {bolt_id} lost from view at iteration {iteration}")
        self.bolt_id = bolt_id
        self.iteration = iteration


@dataclass(frozen=True)
class PlaneModel:
    normal: np.ndarray
    offset: float  # plane: normal . x = offset
    inliers: int

    def distance(self, points: np.ndarray) -> np.ndarray:
        return np.abs(points @ self.normal - self.offset)


def _fit_lsq(points: np.ndarray) -> tuple[np.ndarray, float]:
    c = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - c, full_matrices=False)
    n = vt[-1]
    return n, float(n @ c)


def ransac_plane(points, iters: int, tol: float, rng: np.random.Generator) -> PlaneModel:
    """Best plane by inlier count (first found wins ties), refit by least squares on its inliers."""
    P = np.asarray(points, dtype=float)
    if P.ndim != 2 or P.shape[1] != 3 or len(P) < 3:
        raise EstimationError("need at least 3 points of dimension 3")
    sv = np.linalg.svd(P - P.mean(axis=0), compute_uv=False)
    if sv[1] <= 1e-9 * max(sv[0], 1e-300):
        raise EstimationError("points are collinear")
    idx = rng.integers(0, len(P), size=(max(int(iters), 1), 3))
    a, b, c = P[idx[:, 0]], P[idx[:, 1]], P[idx[:, 2]]
    n = np.cross(b - a, c - a)
    norm = np.linalg.norm(n, axis=1)
    ok = norm > 1e-12
    n[ok] /= norm[ok, None]
    d = np.sum(n * a, axis=1)
    counts = np.where(ok, (np.abs(P @ n.T - d) <= tol).sum(axis=0), -1)
    best = int(np.argmax(counts))
    if counts[best] < 3:
        # No sample produced a usable model; fall back to the global least-squares plane.
        nn, dd = _fit_lsq(P)
    else:
        mask = np.abs(P @ n[best] - d[best]) <= tol
        nn, dd = _fit_lsq(P[mask])
    inl = int((np.abs(P @ nn - dd) <= tol).sum())
    return PlaneModel(nn, dd, inl)


def pose_from_planes(top: PlaneModel, side: PlaneModel, center_ray, ray_origin=(0.0, 0.0, 0.0)) -> Pose6:
    """Bolt frame from the head's top plane and one flank plane.

    z is the top normal turned toward the sensor (the ray origin), x is the flank normal made
    orthogonal to z and pointing away from the head centre, and the origin is where the
    centre ray meets the top plane.
    """
    n1 = np.asarray(top.normal, dtype=float)
    n2 = np.asarray(side.normal, dtype=float)
    if abs(float(n1 @ n2)) >= 0.99:
        raise EstimationError("top and side planes are nearly parallel")
    o = np.asarray(ray_origin, dtype=float)
    r = np.asarray(center_ray, dtype=float)
    r = r / np.linalg.norm(r)
    denom = float(n1 @ r)
    if abs(denom) < 1e-9:
        raise EstimationError("centre ray is parallel to the top plane")
    t = (top.offset - n1 @ o) / denom
    p = o + t * r
    z = n1 if float(n1 @ (o - p)) > 0 else -n1
    x = n2 - (n2 @ z) * z
    x /= np.linalg.norm(x)
    if side.offset - n2 @ p < 0:
        x = -x
    y = np.cross(z, x)
    return Pose6.from_rt(np.column_stack([x, y, z]), p)


@dataclass(frozen=True)
class KalmanEstimate:
    mean: np.ndarray
    covariance: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    @property
    def trace(self) -> float:
        return float(np.trace(self.covariance))


def _require_pd(M: np.ndarray, what: str) -> None:
    if not np.allclose(M, M.T, atol=1e-9 * max(1.0, float(np.abs(M).max()))):
        raise EstimationError(f"{what} is not symmetric")
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError as e:
        raise EstimationError(f"{what} is not positive definite") from e


def kalman_update(est: KalmanEstimate, z) -> KalmanEstimate:
    """Identity-dynamics predict then correct; symmetry re-imposed afterwards."""
    P, Q, R = est.covariance, est.Q, est.R
    _require_pd(P, "covariance")
    _require_pd(R, "measurement noise")
    if np.min(np.linalg.eigvalsh((Q + Q.T) / 2)) < -1e-12:
        raise EstimationError("process noise is not positive semi-definite")
    z = np.asarray(z, dtype=float)
    Pm = P + Q
    S = Pm + R
    K = np.linalg.solve(S.T, Pm.T).T  # Pm @ inv(S)
    mean = est.mean + K @ (z - est.mean)
    n = len(mean)
    Pn = (np.eye(n) - K) @ Pm
    Pn = (Pn + Pn.T) / 2
    return KalmanEstimate(mean, Pn, Q, R)


@dataclass(frozen=True)
class MateConfig:
    epsilon: float = 0.05  # on trace(P): mm^2 for position plus rad^2 for orientation
    max_iterations: int = 20
    process_noise: float = 1e-4
    variance_floor: float = 1e-6
    ransac_iterations: int = 100
    ransac_tol: float | None = None  # None: three point-noise sigmas at the current standoff
    ransac_tol_floor: float = 0.05
    start_standoff: float = 150.0
    final_standoff: float = 10.0
    shrink: float = 0.55

    def __post_init__(self):
        if self.epsilon <= 0 or self.max_iterations < 1:
            raise ValueError("epsilon must be > 0 and max_iterations >= 1")
        if not 0 < self.shrink <= 1:
            raise ValueError("shrink must lie in (0, 1]")

    @classmethod
    def from_dict(cls, d: dict | None) -> MateConfig:
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown mate keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class MateResult:
    pose: Pose6
    iterations: int
    converged: bool
    tip: Pose6
    trace: list = field(default_factory=list)  # (iteration, standoff mm, trace(P))


def _measure(obs, bolt_id: str, config: MateConfig, rng: np.random.Generator, tol: float) -> Pose6:
    top_pts, side_pts = obs.depth_patches[bolt_id]
    top = ransac_plane(top_pts, config.ransac_iterations, tol, rng)
    side = ransac_plane(side_pts, config.ransac_iterations, tol, rng)
    cam = obs.camera_pose
    ray = cam.R.T @ (obs.pose_measurements[bolt_id].p - cam.p)
    local = pose_from_planes(top, side, ray)
    return Pose6.from_rt(cam.R @ local.R, cam.p + cam.R @ local.p)


def measurement_sigmas(runner: SceneRunner, standoff: float, head_radius: float) -> tuple[float, float]:
    sp = runner.noise.pos_sigma(standoff)
    sr = max(runner.noise.rot_sigma(standoff), runner.noise.point_scale * sp / max(head_radius, 1e-6))
    return sp, sr


def mate_loop(runner: SceneRunner, bolt_id: str, config: MateConfig = MateConfig()) -> MateResult:
    """Observe, fit, filter, move closer; stop once trace(P) < epsilon."""
    rng = runner.rng
    standoff = config.start_standoff
    est: KalmanEstimate | None = None
    ref = np.eye(3)
    history = []
    head_r = runner.world.bolt(bolt_id).head_across_flats / 2
    converged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        obs = runner.observe()
        if bolt_id not in obs.pose_measurements:
            raise BoltLostError(bolt_id, it)
        sp, sr = measurement_sigmas(runner, standoff, head_r)
        tol = config.ransac_tol
        if tol is None:
            tol = max(config.ransac_tol_floor, 3.0 * runner.noise.point_scale * sp)
        meas = _measure(obs, bolt_id, config, rng, tol)
        R = np.diag([max(sp * sp, config.variance_floor)] * 3 + [max(sr * sr, config.variance_floor)] * 3)
        if est is None:
            ref = meas.R
            est = KalmanEstimate(np.concatenate([meas.p, np.zeros(3)]), R.copy(),
                                 config.process_noise * np.eye(6), R)
        else:
            z = np.concatenate([meas.p, log_so3(ref.T @ meas.R)])
            est = kalman_update(KalmanEstimate(est.mean, est.covariance, est.Q, R), z)
            # Fold the orientation increment back into the reference rotation.
            ref = ref @ exp_so3(est.mean[3:])
            est = KalmanEstimate(np.concatenate([est.mean[:3], np.zeros(3)]), est.covariance, est.Q, est.R)
        history.append((it, standoff, est.trace))
        log.debug("mate %s iter %d standoff %.1f trace %.4g", bolt_id, it, standoff, est.trace)
        if est.trace < config.epsilon:
            converged = True
            break
        standoff = max(config.final_standoff, standoff * config.shrink)
        runner.command_effector(tool_pose_for(Pose6.from_rt(ref, est.mean[:3]), standoff))
    pose = Pose6.from_rt(ref, est.mean[:3])
    tip = tool_pose_for(pose, config.final_standoff)
    runner.command_effector(tip)
    return MateResult(pose, it, converged, tip, history)


__all__ = ["BoltLostError", "EstimationError", "KalmanEstimate", "MateConfig", "MateResult", "PlaneModel",
           "camera_pose", "kalman_update", "mate_loop", "pose_from_planes", "ransac_plane"]
