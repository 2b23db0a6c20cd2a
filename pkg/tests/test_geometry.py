import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diverseplan.geometry import (
    ActorState,
    LaneCenterline,
    Pose2,
    ProjectionOutOfRangeError,
    Trajectory,
    arc_lane,
    derive_kinematics,
    from_frenet,
    obb_overlap,
    obb_overlap_many,
    project_to_frenet,
    straight_lane,
    wrap_angle,
)


def make_actor(x, y, heading=0.0, speed=0.0):
    return ActorState(id=0, pose=Pose2(x, y, heading), speed=speed, length=4.0, width=2.0)


class TestProjectToFrenet:
    def test_axis_aligned(self):
        lane = straight_lane((0, 0), (100, 0), speed_limit=10)
        fs = project_to_frenet(make_actor(5, 2, 0.0, speed=3.0), lane)
        assert fs.s == pytest.approx(5.0)
        assert fs.d == pytest.approx(2.0)
        assert fs.s_dot == pytest.approx(3.0)
        assert fs.d_dot == pytest.approx(0.0)

    def test_origin(self):
        lane = straight_lane((0, 0), (100, 0), speed_limit=10)
        fs = project_to_frenet(make_actor(0, 0, 0.0, speed=0.0), lane)
        assert (fs.s, fs.s_dot, fs.s_ddot, fs.d, fs.d_dot, fs.d_ddot) == (0, 0, 0, 0, 0, 0)

    def test_quarter_circle_midpoint(self):
        # Left-turning quarter circle of radius 10 starting at (10, 0) heading +y.
        # Arc midpoint at 45 deg; 1 m outward (away from the center) is right of
        # travel, so d = -1. Expected s is the closed-form arc length to midpoint.
        radius = 10.0
        lane = arc_lane((0, 0), radius, 0.0, math.pi / 2, speed_limit=10, max_spacing=0.01)
        mid = math.pi / 4
        px = (radius + 1.0) * math.cos(mid)
        py = (radius + 1.0) * math.sin(mid)
        fs = project_to_frenet(make_actor(px, py, mid + math.pi / 2), lane)
        assert fs.s == pytest.approx(math.pi * radius / 4, abs=2e-4)
        assert fs.d == pytest.approx(-1.0, abs=2e-4)

    def test_beyond_extent_raises(self):
        lane = straight_lane((0, 0), (10, 0), speed_limit=10)
        with pytest.raises(ProjectionOutOfRangeError):
            project_to_frenet(make_actor(12.0, 0.5), lane)

    def test_far_lateral_raises(self):
        lane = straight_lane((0, 0), (10, 0), speed_limit=10)
        with pytest.raises(ValueError):
            project_to_frenet(make_actor(5.0, 60.0), lane)


class TestFromFrenet:
    def test_straight_constant_speed(self):
        lane = straight_lane((0, 0), (100, 0), speed_limit=10)
        t = np.arange(11) * 0.5
        traj = from_frenet(4.0 * t, np.zeros_like(t), lane, dt=0.5)
        assert np.allclose(traj.waypoints[:, 1], 0.0)
        assert np.allclose(traj.speed, 4.0)

    def test_constant_offset(self):
        lane = straight_lane((0, 0), (100, 0), speed_limit=10)
        t = np.arange(11) * 0.5
        traj = from_frenet(4.0 * t, np.ones_like(t), lane, dt=0.5)
        assert np.allclose(traj.waypoints[:, 1], 1.0)

    def test_quintic_lateral_endpoint(self):
        # Min-jerk quintic from d=0 to d=1 over 5 s: coefficients evaluated at
        # the boundary give d(5) = 1 and d'(5) = 0 exactly.
        lane = straight_lane((0, 0), (100, 0), speed_limit=10)
        t = np.linspace(0.0, 5.0, 51)
        u = t / 5.0
        d = 10 * u**3 - 15 * u**4 + 6 * u**5
        traj = from_frenet(6.0 * t, d, lane, dt=0.1)
        assert traj.waypoints[-1, 0] == pytest.approx(30.0)
        assert traj.waypoints[-1, 1] == pytest.approx(1.0)
        lateral_speed = (traj.waypoints[-1, 1] - traj.waypoints[-2, 1]) / 0.1
        assert abs(lateral_speed) < 5e-3

    def test_off_extent_raises(self):
        lane = straight_lane((0, 0), (10, 0), speed_limit=10)
        with pytest.raises(ValueError):
            from_frenet(np.array([0.0, 20.0]), np.zeros(2), lane, dt=0.5)


class TestObbOverlap:
    def test_identical(self):
        box = (0.0, 0.0, 0.3, 4.0, 2.0)
        assert obb_overlap(box, box)

    def test_disjoint(self):
        assert not obb_overlap((0, 0, 0, 1, 1), (10, 0, 0, 1, 1))

    def test_rotated_square_gap(self):
        # Hand SAT: unit square at origin vs unit square rotated 45 deg at
        # (1.2, 0). Half extents along x: 0.5 + sqrt(2)/2 = 1.207 > 1.2.
        assert obb_overlap((0, 0, 0, 1, 1), (1.2, 0, math.pi / 4, 1, 1))
        # At 1.21 separation the x axis separates them.
        assert not obb_overlap((0, 0, 0, 1, 1), (1.21, 0, math.pi / 4, 1, 1))

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_symmetric_and_rigid_invariant(self, seed):
        rng = np.random.default_rng(seed)
        a = np.array([*rng.uniform(-5, 5, 2), rng.uniform(-np.pi, np.pi), *rng.uniform(0.5, 4, 2)])
        b = np.array([*rng.uniform(-5, 5, 2), rng.uniform(-np.pi, np.pi), *rng.uniform(0.5, 4, 2)])
        assert obb_overlap(a, b) == obb_overlap(b, a)
        # Apply one rigid transform to both rectangles.
        ang = rng.uniform(-np.pi, np.pi)
        shift = rng.uniform(-10, 10, 2)
        rot = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])

        def move(box):
            xy = rot @ box[:2] + shift
            return np.array([xy[0], xy[1], wrap_angle(box[2] + ang), box[3], box[4]])

        assert obb_overlap(a, b) == obb_overlap(move(a), move(b))

    def test_many_matches_scalar(self):
        rng = np.random.default_rng(7)
        a = np.column_stack(
            [rng.uniform(-3, 3, (50, 2)), rng.uniform(-np.pi, np.pi, (50, 1)), rng.uniform(0.5, 3, (50, 2))]
        )
        b = np.column_stack(
            [rng.uniform(-3, 3, (50, 2)), rng.uniform(-np.pi, np.pi, (50, 1)), rng.uniform(0.5, 3, (50, 2))]
        )
        batch = obb_overlap_many(a, b)
        scalar = np.array([obb_overlap(x, y) for x, y in zip(a, b)])
        assert np.array_equal(batch, scalar)


class TestDeriveKinematics:
    def test_constant_velocity(self):
        t = np.arange(9) * 0.5
        wp = np.column_stack([2.0 * t, np.zeros_like(t)])
        speed, accel, jerk, heading, curvature = derive_kinematics(wp, 0.5)
        assert np.allclose(speed, 2.0)
        assert np.allclose(accel, 0.0)
        assert np.allclose(jerk, 0.0)
        assert np.allclose(heading, 0.0)

    def test_stationary_holds_heading(self):
        wp = np.array([[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]])
        speed, _, _, heading, curvature = derive_kinematics(wp, 0.5, fallback_heading=0.7)
        assert np.allclose(speed, 0.0)
        assert np.allclose(heading, 0.7)
        assert np.all(np.isfinite(curvature))

    def test_parabola_accel(self):
        # s(t) = 0.5 t^2 along x; central differences recover accel = 1
        # exactly at interior points for a quadratic.
        t = np.arange(11) * 0.5
        wp = np.column_stack([0.5 * t**2, np.zeros_like(t)])
        _, accel, _, _, _ = derive_kinematics(wp, 0.5)
        assert np.allclose(accel[2:-2], 1.0, atol=1e-9)

    def test_rigid_equivariance(self):
        rng = np.random.default_rng(3)
        wp = np.cumsum(rng.uniform(0.2, 1.0, (12, 2)), axis=0)
        speed, accel, jerk, _, curvature = derive_kinematics(wp, 0.5)
        ang = 1.1
        rot = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
        wp2 = wp @ rot.T + np.array([5.0, -3.0])
        speed2, accel2, jerk2, _, curvature2 = derive_kinematics(wp2, 0.5)
        assert np.allclose(speed, speed2)
        assert np.allclose(accel, accel2)
        assert np.allclose(jerk, jerk2)
        assert np.allclose(curvature, curvature2)

    def test_trajectory_rederivation_idempotent(self):
        rng = np.random.default_rng(5)
        wp = np.cumsum(rng.uniform(0.1, 0.8, (10, 2)), axis=0)
        traj = Trajectory(wp, dt=0.1)
        again = Trajectory(traj.waypoints, dt=0.1)
        assert np.array_equal(traj.speed, again.speed)
        assert np.array_equal(traj.curvature, again.curvature)


class TestFrenetRoundTrip:
    def test_random_smooth_lanes(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            radius = rng.uniform(15.0, 60.0)
            sweep = rng.uniform(0.5, 1.4)
            lane = arc_lane((0, 0), radius, 0.0, sweep, speed_limit=10, max_spacing=0.05)
            s = rng.uniform(1.0, lane.total_arclength - 1.0, 8)
            d = rng.uniform(-10.0, 10.0, 8)
            pts = lane.xy_at(s, d)
            s2, d2, _, in_range = lane.project_xy(pts[:, 0], pts[:, 1])
            assert np.all(in_range)
            pts2 = lane.xy_at(s2, d2)
            err = np.hypot(pts2[:, 0] - pts[:, 0], pts2[:, 1] - pts[:, 1])
            assert np.max(err) < 1e-4

    def test_straight_lane_roundtrip_exact(self):
        lane = straight_lane((1.0, 2.0), (40.0, 30.0), speed_limit=10)
        fs = project_to_frenet(make_actor(10.0, 11.0, 0.6, speed=2.0), lane)
        pt = lane.xy_at(np.array([fs.s]), np.array([fs.d]))[0]
        assert pt[0] == pytest.approx(10.0, abs=1e-6)
        assert pt[1] == pytest.approx(11.0, abs=1e-6)


def test_lane_resampling_spacing():
    lane = LaneCenterline([Pose2(0, 0), Pose2(11, 0)], speed_limit=10)
    assert np.max(lane.segment_lengths) <= 2.0 + 1e-12
    assert lane.cumulative_arclength[0] == 0.0
    assert np.all(np.diff(lane.cumulative_arclength) > 0)


def test_scene_validation():
    lane = straight_lane((0, 0), (50, 0), speed_limit=10)
    sdv = make_actor(0, 0, speed=5.0)
    from diverseplan.geometry import Scene

    with pytest.raises(ValueError):
        Scene(0.0, sdv, (make_actor(1, 0), make_actor(1, 0)), (lane,), 0)
    with pytest.raises(ValueError):
        Scene(0.0, sdv, (), (lane,), 2)
