from __future__ import annotations

import numpy as np
import pytest

from boltplan.geometry import Pose6, exp_so3
from boltplan.kinematics import (
    DEFAULT_DH,
    ChassisPose,
    IkParams,
    JointLimitError,
    check_limits,
    fk,
    ik_dls,
    jacobian,
    solve_multi,
    tool_target_matrix,
    verify_chassis,
)
from boltplan.reach import reachability_penalty
from boltplan.scene import default_station


def test_zero_configuration_matches_dh_sum():
    p = fk(np.zeros(6)).p
    # links along x: a2 + a3; offsets along y: d4 + d6; z: d1 - d5
    assert p[0] == pytest.approx(-425.0 - 392.2)
    assert p[2] == pytest.approx(162.5 - 99.7)


def test_joint_limits_enforced():
    with pytest.raises(JointLimitError):
        check_limits(np.full(6, 10.0), DEFAULT_DH)
    with pytest.raises(ValueError):
        check_limits(np.zeros(5), DEFAULT_DH)


def test_jacobian_linear_part_matches_position_differences():
    q = np.array([0.3, -1.2, 1.1, -0.4, 0.7, 0.2])
    J = jacobian(q)
    h = 1e-6
    for i in range(6):
        e = np.zeros(6)
        e[i] = h
        assert np.allclose((fk(q + e).p - fk(q - e).p) / (2 * h), J[:3, i], atol=1e-5)


def test_dls_recovers_a_reachable_pose():
    rng = np.random.default_rng(3)
    q = np.array([0.2, -1.0, 1.2, -1.5, -1.4, 0.3])
    target = fk(q)
    res = ik_dls(target, q + rng.normal(0, 0.1, 6))
    assert res.converged
    assert res.residual[0] < 1e-2 and res.residual[1] < 1e-4


def test_unreachable_target_is_reported_not_raised():
    far = Pose6((5000.0, 0.0, 0.0))
    res = ik_dls(far, np.zeros(6), IkParams(max_iterations=50))
    assert not res.converged


def test_solve_multi_prefers_converged_seed():
    T = fk(np.array([0.5, -1.4, 1.5, -1.6, -1.5, 0.0])).matrix()
    res = solve_multi(T)
    assert res.converged


def test_default_station_verifies_and_far_station_does_not():
    bolt = Pose6((1000.0, 1000.0, 100.0))
    assert verify_chassis(default_station(bolt), bolt).converged
    assert not verify_chassis(ChassisPose(4000.0, 4000.0, 0.0), bolt).converged


def test_tool_target_faces_bolt():
    bolt = Pose6.from_rt(exp_so3([0.2, 0.1, 0.4]), [0, 0, 0])
    T = tool_target_matrix(bolt, 50.0)
    assert np.allclose(T[:3, 2], -bolt.R[:, 2])
    assert np.allclose(T[:3, 3], 50.0 * bolt.R[:, 2])


def test_penalty_zero_at_good_station_and_positive_far_away():
    bolt = Pose6((1000.0, 1000.0, 100.0))
    v, g = reachability_penalty(default_station(bolt), bolt)
    assert v == pytest.approx(0.0, abs=1e-9)
    far, gf = reachability_penalty(ChassisPose(3000.0, 1000.0, 0.0), bolt)
    assert far > 0 and gf[0] > 0  # moving further away increases the penalty
