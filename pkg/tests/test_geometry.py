from __future__ import annotations

import numpy as np
import pytest

from boltplan.geometry import Pose6, exp_so3, log_so3, matrix_to_quat, quat_to_matrix, wrap_angle


def test_quaternion_matrix_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(200):
        R = exp_so3(rng.normal(size=3) * 1.5)
        assert np.allclose(quat_to_matrix(matrix_to_quat(R)), R, atol=1e-12)


def test_exp_log_inverse_including_near_pi():
    rng = np.random.default_rng(1)
    for w in [rng.normal(size=3) for _ in range(100)] + [np.array([np.pi - 1e-9, 0, 0])]:
        w = w if np.linalg.norm(w) < np.pi else w / np.linalg.norm(w) * (np.pi - 1e-6)
        assert np.allclose(exp_so3(log_so3(exp_so3(w))), exp_so3(w), atol=1e-9)


def test_pose_arrays_are_read_only():
    pose = Pose6((1.0, 2.0, 3.0))
    with pytest.raises(ValueError):
        pose.p[0] = 5.0
    assert pose.matrix()[0, 3] == 1.0


def test_non_unit_quaternion_rejected():
    with pytest.raises(ValueError):
        Pose6((0, 0, 0), (1.0, 1.0, 0.0, 0.0))


def test_error_to_is_zero_for_self_and_symmetric():
    a = Pose6.from_rt(exp_so3([0.1, 0.2, -0.3]), [1, 2, 3])
    b = Pose6.from_rt(exp_so3([0.0, 0.1, 0.3]), [4, 6, 3])
    assert a.error_to(a) == pytest.approx((0.0, 0.0), abs=1e-12)
    assert a.error_to(b) == pytest.approx(b.error_to(a))
    assert a.error_to(b)[0] == pytest.approx(5.0)


@pytest.mark.parametrize("a,expected", [(0.0, 0.0), (2 * np.pi, 0.0), (3 * np.pi / 2, -np.pi / 2)])
def test_wrap_angle(a, expected):
    assert wrap_angle(a) == pytest.approx(expected)
