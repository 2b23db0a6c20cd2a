"""Shared geometric and kinematic primitives.

Poses, lane centerlines, Frenet-frame transforms, oriented-rectangle
collision tests and finite-difference trajectory kinematics. Everything
here is an immutable value plus pure functions, so callers may parallelize
freely.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ACTOR_CLASSES = ("vehicle", "pedestrian", "bicyclist")

# Below this displacement [m] headings/curvatures are carried over instead
# of differentiated, to avoid NaN on stationary trajectories.
DISPLACEMENT_GUARD = 1e-6


class ProjectionOutOfRangeError(ValueError):
    """Pose projects beyond the lane extent; extend or reject the lane."""


def wrap_angle(theta):
    """Normalize an angle (array or scalar) to (-pi, pi]."""
    wrapped = np.mod(np.asarray(theta, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    wrapped = np.where(wrapped <= -np.pi, np.pi, wrapped)
    return float(wrapped) if np.isscalar(theta) else wrapped


@dataclass(frozen=True)
class Pose2:
    """2-D pose: position in meters, heading in radians, wrapped to (-pi, pi]."""

    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))


@dataclass(frozen=True)
class ActorState:
    """Bounding-box state of one traffic participant (or the SDV)."""

    id: int
    pose: Pose2
    speed: float
    length: float
    width: float
    actor_class: str = "vehicle"

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError("actor dimensions must be positive")
        if self.speed < 0:
            raise ValueError("speed must be nonnegative")
        if self.actor_class not in ACTOR_CLASSES:
            raise ValueError(f"unknown actor class {self.actor_class!r}")

    def box(self):
        """(cx, cy, heading, length, width) tuple for collision tests."""
        return (self.pose.x, self.pose.y, self.pose.heading, self.length, self.width)


def _readonly(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


class LaneCenterline:
    """Polyline lane centerline with cumulative arclength.

    Points are resampled on construction so consecutive spacing never
    exceeds ``max_spacing`` (2 m by default). Headings are per segment;
    the Frenet transforms below are exact inverses of each other on the
    resampled polyline.
    """

    def __init__(self, points, speed_limit, max_spacing=2.0):
        pts = np.asarray([(p.x, p.y) if isinstance(p, Pose2) else p for p in points], dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise ValueError("centerline needs at least two (x, y) points")
        pts = self._resample(pts, max_spacing)
        self.points = _readonly(pts)
        seg = np.diff(pts, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seg_len <= 0):
            raise ValueError("centerline contains duplicate consecutive points")
        self.segment_lengths = _readonly(seg_len)
        self.segment_dirs = _readonly(seg / seg_len[:, None])
        self.segment_headings = _readonly(np.arctan2(seg[:, 1], seg[:, 0]))
        cum = np.concatenate(([0.0], np.cumsum(seg_len)))
        self.cumulative_arclength = _readonly(cum)
        self.total_arclength = float(cum[-1])
        self.speed_limit = float(speed_limit)
        if self.speed_limit <= 0:
            raise ValueError("speed limit must be positive")
        self._is_straight = bool(
            np.all(np.abs(self.segment_headings - self.segment_headings[0]) < 1e-12)
        )

    @staticmethod
    def _resample(pts, max_spacing):
        out = [pts[0]]
        for a, b in zip(pts[:-1], pts[1:]):
            d = math.hypot(b[0] - a[0], b[1] - a[1])
            if d <= 0:
                continue
            n = max(1, int(math.ceil(d / max_spacing)))
            for i in range(1, n + 1):
                out.append(a + (b - a) * (i / n))
        return np.asarray(out)

    # -- Frenet transforms -------------------------------------------------

    def project_xy(self, x, y):
        """Project points onto the polyline.

        Returns (s, d, segment_index, in_range) arrays; d is signed with
        left-of-travel positive. ``in_range`` is False where the unclamped
        projection falls before the first or past the last vertex.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if self._is_straight:
            ux, uy = self.segment_dirs[0]
            rx = x - self.points[0, 0]
            ry = y - self.points[0, 1]
            s = rx * ux + ry * uy
            d = ux * ry - uy * rx
            in_range = (s >= -1e-9) & (s <= self.total_arclength + 1e-9)
            s_cl = np.clip(s, 0.0, self.total_arclength)
            seg = np.clip(
                np.searchsorted(self.cumulative_arclength, s_cl, side="right") - 1,
                0,
                len(self.segment_lengths) - 1,
            )
            return s_cl, d, seg, in_range
        p0 = self.points[:-1]
        dirs = self.segment_dirs
        rel_x = x[:, None] - p0[None, :, 0]
        rel_y = y[:, None] - p0[None, :, 1]
        t = rel_x * dirs[None, :, 0] + rel_y * dirs[None, :, 1]
        t_clamped = np.clip(t, 0.0, self.segment_lengths[None, :])
        proj_x = p0[None, :, 0] + t_clamped * dirs[None, :, 0]
        proj_y = p0[None, :, 1] + t_clamped * dirs[None, :, 1]
        dist2 = (x[:, None] - proj_x) ** 2 + (y[:, None] - proj_y) ** 2
        seg = np.argmin(dist2, axis=1)
        rows = np.arange(x.shape[0])
        t_best = t_clamped[rows, seg]
        s = self.cumulative_arclength[seg] + t_best
        dx = x - proj_x[rows, seg]
        dy = y - proj_y[rows, seg]
        d = dirs[seg, 0] * dy - dirs[seg, 1] * dx
        t_raw = t[rows, seg]
        in_range = ~(
            ((seg == 0) & (t_raw < -1e-9))
            | ((seg == len(self.segment_lengths) - 1) & (t_raw > self.segment_lengths[-1] + 1e-9))
        )
        return s, d, seg, in_range

    def xy_at(self, s, d=0.0):
        """Map Frenet (s, d) arrays to Cartesian points on/offset the lane."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        d = np.broadcast_to(np.asarray(d, dtype=float), s.shape)
        if self._is_straight:
            ux, uy = self.segment_dirs[0]
            x = self.points[0, 0] + ux * s - uy * d
            y = self.points[0, 1] + uy * s + ux * d
            return np.stack([x, y], axis=-1)
        seg = np.clip(
            np.searchsorted(self.cumulative_arclength, s, side="right") - 1,
            0,
            len(self.segment_lengths) - 1,
        )
        along = s - self.cumulative_arclength[seg]
        dirs = self.segment_dirs[seg]
        base = self.points[seg] + dirs * along[:, None]
        normal = np.stack([-dirs[:, 1], dirs[:, 0]], axis=1)
        return base + normal * d[:, None]

    def heading_at(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if self._is_straight:
            return np.full(s.shape, self.segment_headings[0])
        seg = np.clip(
            np.searchsorted(self.cumulative_arclength, s, side="right") - 1,
            0,
            len(self.segment_lengths) - 1,
        )
        return self.segment_headings[seg]


def straight_lane(start, end, speed_limit, max_spacing=2.0):
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    return LaneCenterline([start, end], speed_limit, max_spacing=max_spacing)


def arc_lane(center, radius, start_angle, end_angle, speed_limit, max_spacing=0.25):
    """Circular-arc lane; positive sweep turns left (counterclockwise)."""
    sweep = end_angle - start_angle
    n = max(2, int(math.ceil(abs(sweep) * radius / max_spacing)) + 1)
    angles = np.linspace(start_angle, end_angle, n)
    pts = np.stack(
        [center[0] + radius * np.cos(angles), center[1] + radius * np.sin(angles)], axis=1
    )
    return LaneCenterline(pts, speed_limit, max_spacing=max_spacing)


@dataclass(frozen=True)
class FrenetState:
    """Longitudinal/lateral state relative to a lane centerline."""

    s: float
    s_dot: float
    s_ddot: float
    d: float
    d_dot: float
    d_ddot: float


def project_to_frenet(actor, lane, accel=0.0):
    """Project an actor state (plus its longitudinal accel) onto a lane.

    Raises ProjectionOutOfRangeError when the pose falls beyond the lane
    extent, and ValueError when it is more than 50 m off the centerline.
    """
    s, d, seg, in_range = lane.project_xy(actor.pose.x, actor.pose.y)
    if not bool(in_range[0]):
        raise ProjectionOutOfRangeError(
            f"pose ({actor.pose.x:.2f}, {actor.pose.y:.2f}) projects beyond lane extent"
        )
    if abs(d[0]) > 50.0:
        raise ValueError("pose farther than 50 m lateral of the centerline")
    heading_err = wrap_angle(actor.pose.heading - lane.segment_headings[seg[0]])
    c, sn = math.cos(heading_err), math.sin(heading_err)
    return FrenetState(
        s=float(s[0]),
        s_dot=actor.speed * c,
        s_ddot=accel * c,
        d=float(d[0]),
        d_dot=actor.speed * sn,
        d_ddot=accel * sn,
    )


class Trajectory:
    """Timestamped 2-D waypoint sequence with finite-difference kinematics.

    Derived per-step quantities (speed, accel, jerk, heading, curvature)
    are recomputed from the waypoints on construction, so re-deriving from
    the stored waypoints is idempotent.
    """

    __slots__ = ("t0", "dt", "waypoints", "speed", "accel", "jerk", "heading", "curvature")

    def __init__(self, waypoints, dt, t0=0.0, fallback_heading=0.0):
        if dt <= 0:
            raise ValueError("dt must be positive")
        wp = np.asarray(waypoints, dtype=float)
        if wp.ndim != 2 or wp.shape[0] < 2 or wp.shape[1] != 2:
            raise ValueError("waypoints must be an (T>=2, 2) array")
        self.t0 = float(t0)
        self.dt = float(dt)
        self.waypoints = _readonly(wp)
        speed, accel, jerk, heading, curvature = derive_kinematics(
            wp, dt, fallback_heading=fallback_heading
        )
        self.speed = _readonly(speed)
        self.accel = _readonly(accel)
        self.jerk = _readonly(jerk)
        self.heading = _readonly(heading)
        self.curvature = _readonly(curvature)

    def __len__(self):
        return self.waypoints.shape[0]

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(len(self))

    @property
    def horizon(self):
        return self.dt * (len(self) - 1)

    def pose_at_index(self, i):
        return Pose2(self.waypoints[i, 0], self.waypoints[i, 1], self.heading[i])


def derive_kinematics_batch(waypoints, dt, fallback_heading=0.0):
    """Finite-difference kinematics for a batch of waypoint sequences.

    ``waypoints`` is (..., T, 2); returns (speed, accel, jerk, heading,
    curvature), each (..., T). Central differences at interior points,
    one-sided at the ends. Heading uses the same displacement stencil;
    where a displacement is shorter than the guard it is held from the
    last moving step (or the fallback). Curvature is heading change over
    traveled arclength, zero-guarded.
    """
    wp = np.asarray(waypoints, dtype=float)
    n = wp.shape[-2]
    if n < 2:
        raise ValueError("need at least two waypoints")
    fallback = np.broadcast_to(np.asarray(fallback_heading, dtype=float), wp.shape[:-2])

    # Central differences inside; second-order one-sided at the ends so
    # boundary samples do not dominate squared-derivative costs.
    disp = np.empty_like(wp)
    disp[..., 1:-1, :] = wp[..., 2:, :] - wp[..., :-2, :]
    if n >= 3:
        disp[..., 0, :] = -3 * wp[..., 0, :] + 4 * wp[..., 1, :] - wp[..., 2, :]
        disp[..., -1, :] = 3 * wp[..., -1, :] - 4 * wp[..., -2, :] + wp[..., -3, :]
        span = np.full(n, 2.0 * dt)
    else:
        disp[..., 0, :] = wp[..., 1, :] - wp[..., 0, :]
        disp[..., -1, :] = wp[..., -1, :] - wp[..., -2, :]
        span = np.full(n, dt)

    disp_norm = np.hypot(disp[..., 0], disp[..., 1])
    speed = disp_norm / span

    def central(series):
        out = np.empty_like(series)
        out[..., 1:-1] = (series[..., 2:] - series[..., :-2]) / (2.0 * dt)
        if n >= 3:
            out[..., 0] = (
                -3 * series[..., 0] + 4 * series[..., 1] - series[..., 2]
            ) / (2.0 * dt)
            out[..., -1] = (
                3 * series[..., -1] - 4 * series[..., -2] + series[..., -3]
            ) / (2.0 * dt)
        else:
            out[..., 0] = (series[..., 1] - series[..., 0]) / dt
            out[..., -1] = (series[..., -1] - series[..., -2]) / dt
        return out

    accel = central(speed)
    jerk = central(accel)

    raw_heading = np.arctan2(disp[..., 1], disp[..., 0])
    moving = disp_norm >= DISPLACEMENT_GUARD
    # Forward-fill heading over stationary steps via a running index.
    idx = np.where(moving, np.arange(n), -1)
    idx = np.maximum.accumulate(idx, axis=-1)
    heading = np.where(
        idx >= 0,
        np.take_along_axis(raw_heading, np.maximum(idx, 0), axis=-1),
        fallback[..., None],
    )

    curvature = np.zeros_like(speed)
    step = np.hypot(
        np.diff(wp[..., 0], axis=-1), np.diff(wp[..., 1], axis=-1)
    )
    ds_central = step[..., 1:] + step[..., :-1]
    dh = wrap_angle(heading[..., 2:] - heading[..., :-2])
    interior = np.where(
        ds_central >= DISPLACEMENT_GUARD, dh / np.maximum(ds_central, DISPLACEMENT_GUARD), 0.0
    )
    curvature[..., 1:-1] = interior
    first_ok = step[..., 0] >= DISPLACEMENT_GUARD
    last_ok = step[..., -1] >= DISPLACEMENT_GUARD
    curvature[..., 0] = np.where(
        first_ok,
        wrap_angle(heading[..., 1] - heading[..., 0]) / np.maximum(step[..., 0], DISPLACEMENT_GUARD),
        0.0,
    )
    curvature[..., -1] = np.where(
        last_ok,
        wrap_angle(heading[..., -1] - heading[..., -2]) / np.maximum(step[..., -1], DISPLACEMENT_GUARD),
        0.0,
    )
    return speed, accel, jerk, heading, curvature


def derive_kinematics(waypoints, dt, fallback_heading=0.0):
    """Single-trajectory wrapper around :func:`derive_kinematics_batch`."""
    wp = np.asarray(waypoints, dtype=float)
    if wp.ndim != 2:
        raise ValueError("waypoints must be (T, 2); use the batch variant otherwise")
    return derive_kinematics_batch(wp, dt, fallback_heading=fallback_heading)


def from_frenet(s, d, lane, dt, t0=0.0):
    """Realize longitudinal/lateral Frenet profiles as a Cartesian Trajectory."""
    s = np.asarray(s, dtype=float)
    d = np.asarray(d, dtype=float)
    if np.any(s < -1e-9) or np.any(s > lane.total_arclength + 1e-9):
        raise ValueError("s(t) leaves the lane extent")
    s = np.clip(s, 0.0, lane.total_arclength)
    wp = lane.xy_at(s, d)
    fallback = float(lane.heading_at(s[:1])[0])
    return Trajectory(wp, dt, t0=t0, fallback_heading=fallback)


# -- Oriented-rectangle collision (separating axis) ------------------------


def _box_params(box):
    if isinstance(box, ActorState):
        box = box.box()
    return np.asarray(box, dtype=float)


def obb_overlap(a, b):
    """True iff two oriented rectangles intersect (boundaries included)."""
    return bool(
        obb_overlap_many(_box_params(a)[None, :], _box_params(b)[None, :])[0]
    )


def obb_overlap_many(a, b):
    """Vectorized separating-axis test.

    ``a`` and ``b`` are broadcastable stacks of (cx, cy, heading, length,
    width). Returns a boolean array: True where the rectangles overlap.
    Checks both rectangles' axes; the cross projections collapse to
    |cos(da)| and |sin(da)| of the heading difference.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ca, sa = np.cos(a[..., 2]), np.sin(a[..., 2])
    cb, sb = np.cos(b[..., 2]), np.sin(b[..., 2])
    tx = b[..., 0] - a[..., 0]
    ty = b[..., 1] - a[..., 1]
    hal, haw = 0.5 * a[..., 3], 0.5 * a[..., 4]
    hbl, hbw = 0.5 * b[..., 3], 0.5 * b[..., 4]
    cab = np.abs(ca * cb + sa * sb)
    sab = np.abs(sa * cb - ca * sb)
    eps = 1e-12
    sep = np.abs(tx * ca + ty * sa) > hal + hbl * cab + hbw * sab + eps
    sep |= np.abs(-tx * sa + ty * ca) > haw + hbl * sab + hbw * cab + eps
    sep |= np.abs(tx * cb + ty * sb) > hbl + hal * cab + haw * sab + eps
    sep |= np.abs(-tx * sb + ty * cb) > hbw + hal * sab + haw * cab + eps
    return ~sep


# -- Scene ------------------------------------------------------------------


@dataclass(frozen=True)
class Scene:
    """The world at one timestamp: SDV, actors, lanes and actor histories.

    ``history`` maps actor id to an (H, 3) array of past (x, y, heading)
    rows at ``history_dt`` spacing, oldest first, current pose excluded.
    Actors that appeared mid-scenario repeat their first observed pose
    backward so every history has the same length.
    """

    timestamp: float
    sdv: ActorState
    actors: tuple
    lanes: tuple
    route_lane_index: int
    history: dict = field(default_factory=dict)
    history_dt: float = 0.1

    def __post_init__(self):
        if not (0 <= self.route_lane_index < len(self.lanes)):
            raise ValueError("route_lane_index out of range")
        ids = [a.id for a in self.actors]
        if len(set(ids)) != len(ids):
            raise ValueError("actor ids must be unique")
        lengths = {np.asarray(h).shape[0] for h in self.history.values()}
        if len(lengths) > 1:
            raise ValueError("history length must be identical across actors")

    @property
    def route_lane(self):
        return self.lanes[self.route_lane_index]
