import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cineplan.errors import InvalidArgumentError
from cineplan.geom import Pose4, UnitQuaternion, rot_distance, wrap_angle, yaw_to_quat

finite_angles = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


class TestWrapAngle:
    def test_identity(self):
        assert wrap_angle(0.0) == 0.0

    def test_full_revolution(self):
        assert wrap_angle(2 * math.pi) == pytest.approx(0.0, abs=1e-12)

    def test_wrap_past_boundary(self):
        assert wrap_angle(math.pi + 0.1) == pytest.approx(-math.pi + 0.1)

    def test_boundary_is_half_open(self):
        assert wrap_angle(math.pi) == math.pi
        assert wrap_angle(-math.pi) == math.pi

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidArgumentError):
            wrap_angle(float("nan"))
        with pytest.raises(InvalidArgumentError):
            wrap_angle(float("inf"))

    @given(finite_angles)
    def test_idempotent(self, x):
        assert wrap_angle(wrap_angle(x)) == pytest.approx(wrap_angle(x), abs=1e-12)

    @given(finite_angles)
    def test_range_and_congruence(self, x):
        w = wrap_angle(x)
        assert -math.pi < w <= math.pi
        assert math.remainder(w - x, 2 * math.pi) == pytest.approx(0.0, abs=1e-6)


class TestYawToQuat:
    def test_identity_rotation(self):
        q = yaw_to_quat(0.0)
        assert (q.w, q.x, q.y, q.z) == (1.0, 0.0, 0.0, 0.0)

    def test_half_turn(self):
        q = yaw_to_quat(math.pi)
        assert q.w == pytest.approx(0.0, abs=1e-12)
        assert q.z == pytest.approx(1.0)

    def test_quarter_turn_axis_angle(self):
        # axis-angle formula about z: (cos(theta/2), 0, 0, sin(theta/2))
        q = yaw_to_quat(math.pi / 2)
        assert q.w == pytest.approx(math.cos(math.pi / 4))
        assert q.z == pytest.approx(math.sin(math.pi / 4))
        assert q.x == q.y == 0.0


class TestRotDistance:
    def test_identical(self):
        q = yaw_to_quat(0.7)
        assert rot_distance(q, q) == pytest.approx(0.0, abs=1e-12)

    def test_double_cover(self):
        q = yaw_to_quat(0.7)
        neg = UnitQuaternion(-q.w, -q.x, -q.y, -q.z)
        assert rot_distance(q, neg) == pytest.approx(0.0, abs=1e-12)

    def test_same_axis_quarter(self):
        assert rot_distance(yaw_to_quat(0.0), yaw_to_quat(math.pi / 2)) == pytest.approx(math.pi / 2)

    def test_non_unit_rejected(self):
        with pytest.raises(InvalidArgumentError):
            UnitQuaternion(0.5, 0.5, 0.0, 0.0)

    @given(finite_angles, finite_angles)
    def test_yaw_geodesic_equals_wrapped_difference(self, t1, t2):
        d = rot_distance(yaw_to_quat(t1), yaw_to_quat(t2))
        assert d == pytest.approx(abs(wrap_angle(t1 - t2)), abs=1e-6)

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_triangle_inequality(self, seed):
        rng = np.random.default_rng(seed)
        qs = []
        for _ in range(3):
            v = rng.standard_normal(4)
            v /= np.linalg.norm(v)
            qs.append(UnitQuaternion(*v))
        a, b, c = qs
        assert rot_distance(a, c) <= rot_distance(a, b) + rot_distance(b, c) + 1e-9


class TestPose4:
    def test_theta_wrapped_on_construction(self):
        pose = Pose4(p=np.zeros(3), theta=3 * math.pi)
        assert pose.theta == pytest.approx(math.pi)

    def test_nonfinite_position_rejected(self):
        with pytest.raises(InvalidArgumentError):
            Pose4(p=np.array([0.0, np.inf, 0.0]), theta=0.0)

    def test_round_trip_dict(self):
        pose = Pose4(p=np.array([1.0, 2.0, 3.0]), theta=-1.2)
        back = Pose4.from_dict(pose.to_dict())
        assert np.allclose(back.p, pose.p)
        assert back.theta == pose.theta
