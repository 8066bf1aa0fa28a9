from __future__ import annotations

import numpy as np
import pytest

from boltplan.estimation import (
    BoltLostError,
    EstimationError,
    KalmanEstimate,
    MateConfig,
    PlaneModel,
    kalman_update,
    mate_loop,
    pose_from_planes,
    ransac_plane,
)
from boltplan.harness import mate_trial
from boltplan.scene import NoiseConfig, SceneConfig, SceneRunner, generate_scene


def _plane_points(rng, normal, offset, n=100, noise=0.0):
    normal = np.asarray(normal, float) / np.linalg.norm(normal)
    u = np.cross(normal, [1.0, 0.3, 0.1])
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    a, b = rng.uniform(-10, 10, (2, n))
    return a[:, None] * u + b[:, None] * v + (offset + rng.normal(0, noise, n))[:, None] * normal


def test_ransac_exact_plane():
    rng = np.random.default_rng(0)
    pts = _plane_points(rng, [0, 0, 1], 3.0)
    m = ransac_plane(pts, 50, 0.01, rng)
    assert abs(abs(m.normal[2]) - 1) < 1e-12
    assert m.inliers == len(pts)
    assert abs(m.distance(np.array([[0.0, 0.0, 3.0]]))[0]) < 1e-9


def test_ransac_rejects_degenerate_input():
    rng = np.random.default_rng(0)
    with pytest.raises(EstimationError):
        ransac_plane(np.zeros((2, 3)), 10, 0.1, rng)
    line = np.outer(np.linspace(0, 1, 20), [1.0, 2.0, 3.0])
    with pytest.raises(EstimationError):
        ransac_plane(line, 10, 0.1, rng)


def test_ransac_ignores_heavy_outliers():
    rng = np.random.default_rng(2)
    n = np.array([0.3, -0.2, 0.93])
    pts = np.vstack([_plane_points(rng, n, 1.0, 160, 0.02), rng.uniform(-10, 10, (40, 3))])
    m = ransac_plane(pts, 200, 0.1, rng)
    assert np.degrees(np.arccos(abs(m.normal @ n / np.linalg.norm(n)))) < 0.5


def test_pose_from_planes_builds_right_handed_frame():
    top = PlaneModel(np.array([0.0, 0.0, 1.0]), 0.0, 10)
    side = PlaneModel(np.array([1.0, 0.0, 0.0]), 5.0, 10)
    pose = pose_from_planes(top, side, [0.0, 0.0, -1.0], ray_origin=(0.0, 0.0, 100.0))
    assert np.allclose(pose.p, [0.0, 0.0, 0.0])
    assert np.allclose(pose.R[:, 2], [0, 0, 1]) and np.allclose(pose.R[:, 0], [1, 0, 0])
    assert np.linalg.det(pose.R) == pytest.approx(1.0)


def test_pose_from_planes_rejects_parallel_planes():
    top = PlaneModel(np.array([0.0, 0.0, 1.0]), 0.0, 10)
    with pytest.raises(EstimationError):
        pose_from_planes(top, top, [0.0, 0.0, -1.0], (0, 0, 100))
    with pytest.raises(EstimationError):
        pose_from_planes(top, PlaneModel(np.array([1.0, 0, 0]), 0, 3), [1.0, 0.0, 0.0])


def test_kalman_update_shrinks_covariance_and_moves_toward_measurement():
    est = KalmanEstimate(np.zeros(6), np.eye(6), np.zeros((6, 6)), np.eye(6))
    out = kalman_update(est, np.ones(6))
    assert np.allclose(out.mean, 0.5)
    assert out.trace == pytest.approx(3.0)
    assert np.allclose(out.covariance, out.covariance.T)


def test_kalman_rejects_bad_covariances():
    bad = np.eye(6)
    bad[0, 0] = -1
    with pytest.raises(EstimationError):
        kalman_update(KalmanEstimate(np.zeros(6), bad, np.zeros((6, 6)), np.eye(6)), np.zeros(6))
    asym = np.eye(6)
    asym[0, 1] = 0.5
    with pytest.raises(EstimationError):
        kalman_update(KalmanEstimate(np.zeros(6), np.eye(6), np.zeros((6, 6)), asym), np.zeros(6))
    with pytest.raises(EstimationError):
        kalman_update(KalmanEstimate(np.zeros(6), np.eye(6), -np.eye(6), np.eye(6)), np.zeros(6))


def test_mate_config_validation():
    with pytest.raises(ValueError):
        MateConfig(epsilon=0)
    with pytest.raises(ValueError):
        MateConfig.from_dict({"eps": 1})
    assert MateConfig.from_dict({"epsilon": 0.1}).epsilon == 0.1


def test_zero_noise_converges_in_one_iteration():
    t = mate_trial(0, NoiseConfig.zero())
    assert t.iterations == 1 and t.mated and t.position_error_mm < 1e-9


def test_noisy_mate_is_submillimetre():
    for seed in range(10):
        t = mate_trial(seed, NoiseConfig(sigma_pos=2.0))
        assert t.converged and t.mated and t.position_error_mm < 0.5


def test_trace_history_decreases():
    world = generate_scene(SceneConfig(bolt_count=1), 5)
    b = world.bolts[0]
    runner = SceneRunner(world, NoiseConfig(), np.random.default_rng(1), known_poses={b.id: b.pose})
    runner.step(("move_base", world.base_region, b.region))
    runner.step(("approach", b.id, b.region))
    res = mate_loop(runner, b.id)
    traces = [t for _, _, t in res.trace]
    assert all(x > y for x, y in zip(traces, traces[1:]))


def test_lost_bolt_raises_with_iteration():
    world = generate_scene(SceneConfig(bolt_count=1), 5)
    runner = SceneRunner(world, NoiseConfig(), np.random.default_rng(1))
    # Still parked at home far above: move the view away so the bolt is out of frame.
    from boltplan.scene import look_at

    runner.world = look_at(runner.world, [5000.0, 5000.0, 0.0])
    with pytest.raises(BoltLostError) as e:
        mate_loop(runner, "b0")
    assert e.value.iteration == 1 and e.value.bolt_id == "b0"
