"""Planner cost function: weighted sum of safety, rule and comfort subcosts.

Scalar entry points cost one trajectory against one future; the batched
evaluator used by the planner scores a whole CandidateSet against a
FutureSet in a handful of array operations. Costing runs at the planner
step (0.1 s); terms involving forecasts align to the forecast step
(0.5 s) by subsampling.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .geometry import obb_overlap_many


class AlignmentError(ValueError):
    """Trajectory and future time grids are not commensurate."""


@dataclass(frozen=True)
class CostWeights:
    """Nonnegative weight per subcost; ``progress`` weights the reward."""

    collision: float = 1.0
    safety_distance: float = 1.0
    headway: float = 1.0
    lane_offset: float = 0.5
    road_boundary: float = 200.0
    speed_limit: float = 10.0
    progress: float = 1.0
    jerk: float = 0.1
    accel: float = 0.2
    decel: float = 0.2
    lat_accel: float = 0.5
    curvature: float = 100.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"weight {f.name} must be nonnegative")

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def scaled(self, alpha):
        return CostWeights(**{k: alpha * v for k, v in self.as_dict().items()})


SUBCOST_NAMES = tuple(f.name for f in fields(CostWeights))


@dataclass(frozen=True)
class CostParams:
    """Constants of the subcost definitions (not weights)."""

    collision_constants: dict = None  # per actor class
    d_near: float = 3.0  # proximity radius for the speed penalty [m]
    t_react: float = 0.5
    a_comfort: float = 3.0
    a_hard: float = 8.0
    lane_half_width: float = 1.75  # same-lane test for the lead vehicle
    half_road_width: float = 5.25
    kappa_max: float = 0.2
    sdv_length: float = 5.0
    sdv_width: float = 2.0

    def __post_init__(self):
        if self.collision_constants is None:
            object.__setattr__(
                self,
                "collision_constants",
                {"vehicle": 1e4, "pedestrian": 1e4, "bicyclist": 1e4},
            )


@dataclass(frozen=True)
class CostBreakdown:
    """Per-subcost raw values and the weighted total."""

    values: dict
    total: float

    @classmethod
    def combine(cls, values, weights):
        total = sum(weights.as_dict()[k] * v for k, v in values.items())
        return cls(values=dict(values), total=float(total))


def _future_step_indices(traj, future, t0_future=0.0):
    """Indices into the trajectory grid matching each future timestep.

    The future's first waypoint is one forecast step after its reference
    time. Steps outside the trajectory span are dropped.
    """
    ratio = future.dt / traj.dt
    if abs(ratio - round(ratio)) > 1e-9:
        raise AlignmentError(
            f"future dt {future.dt} is not a multiple of trajectory dt {traj.dt}"
        )
    t_future = t0_future + future.dt * np.arange(1, future.n_steps + 1)
    rel = (t_future - traj.t0) / traj.dt
    idx = np.round(rel).astype(int)
    # A step landing exactly on the first waypoint belongs to the segment
    # that produced that state (the action, for contingent trajectories).
    ok = (np.abs(rel - idx) < 1e-6) & (idx >= 1) & (idx < len(traj))
    return idx[ok], np.nonzero(ok)[0]


def collision_cost(traj, future, params=None, scene=None):
    """Overlap constants plus the near-distance speed penalty, unweighted sum.

    The two pieces carry distinct weights in the breakdown; this spec-level
    wrapper returns their plain sum.
    """
    params = params or CostParams()
    overlap, proximity = collision_and_proximity(traj, future, params)
    return overlap + proximity


def collision_and_proximity(traj, future, params=None):
    params = params or CostParams()
    if future.n_actors == 0:
        return 0.0, 0.0
    idx, fsteps = _future_step_indices(traj, future)
    if idx.size == 0:
        return 0.0, 0.0
    sdv_boxes = np.concatenate(
        [
            traj.waypoints[idx],
            traj.heading[idx, None],
            np.full((idx.size, 1), params.sdv_length),
            np.full((idx.size, 1), params.sdv_width),
        ],
        axis=-1,
    )  # (T, 5)
    actor_boxes = future.boxes[:, fsteps]  # (N, T, 5)
    hits = obb_overlap_many(sdv_boxes[None, :, :], actor_boxes)  # (N, T)
    consts = np.array(
        [params.collision_constants.get(c, 1e4) for c in _future_classes(future)]
    )
    overlap_cost = float(np.sum(hits * consts[:, None]))

    centers = future.trajectories[:, fsteps]  # (N, T, 2)
    dist = np.hypot(
        centers[..., 0] - traj.waypoints[idx, 0], centers[..., 1] - traj.waypoints[idx, 1]
    )
    near = dist < params.d_near
    v2 = traj.speed[idx] ** 2
    proximity_cost = float(np.sum(near * v2[None, :]))
    return overlap_cost, proximity_cost


def _future_classes(future):
    classes = getattr(future, "actor_classes", ())
    if len(classes) != future.n_actors:
        return ("vehicle",) * future.n_actors
    return classes


def headway_cost(traj, future, lane, params=None):
    """Squared shortfall of the gap to the lead vehicle vs a safe distance."""
    params = params or CostParams()
    if future.n_actors == 0:
        return 0.0
    idx, fsteps = _future_step_indices(traj, future)
    if idx.size == 0:
        return 0.0
    s_sdv, _, _, _ = lane.project_xy(traj.waypoints[idx, 0], traj.waypoints[idx, 1])
    v_sdv = traj.speed[idx]
    centers = future.trajectories[:, fsteps]
    s_a, d_a, _, _ = lane.project_xy(centers[..., 0].ravel(), centers[..., 1].ravel())
    s_a = s_a.reshape(centers.shape[:2])
    d_a = d_a.reshape(centers.shape[:2])
    v_a = future.speeds[:, fsteps]
    lengths = future.boxes[:, 0, 3]

    same_lane = np.abs(d_a) <= params.lane_half_width
    ahead = s_a > s_sdv[None, :]
    gap = s_a - s_sdv[None, :] - 0.5 * (lengths[:, None] + params.sdv_length)
    gap = np.where(same_lane & ahead, gap, np.inf)
    lead = np.argmin(gap, axis=0)
    cols = np.arange(idx.size)
    lead_gap = gap[lead, cols]
    lead_v = v_a[lead, cols]
    d_safe = (
        v_sdv * params.t_react
        + v_sdv**2 / (2 * params.a_comfort)
        - lead_v**2 / (2 * params.a_hard)
    )
    shortfall = np.where(np.isfinite(lead_gap), np.maximum(0.0, d_safe - lead_gap), 0.0)
    return float(np.sum(shortfall**2))


def traffic_rule_costs(traj, lane, params=None):
    """(lane_offset, road_boundary, speed_limit) raw sums for one trajectory."""
    params = params or CostParams()
    _, d, _, _ = lane.project_xy(traj.waypoints[:, 0], traj.waypoints[:, 1])
    lane_offset = float(np.sum(np.abs(d)))
    boundary = float(
        np.sum(
            np.maximum(0.0, np.abs(d) + params.sdv_width / 2 - params.half_road_width)
        )
    )
    speeding = float(np.sum(np.maximum(0.0, traj.speed - lane.speed_limit)))
    return lane_offset, boundary, speeding


def comfort_and_progress(traj, lane=None, params=None):
    """(jerk, accel, decel, lat_accel, curvature, progress) raw values.

    Progress is the negative traveled arclength: along the lane when one is
    given, else straight-line displacement.
    """
    params = params or CostParams()
    dt = traj.dt
    jerk = float(np.sum(traj.jerk**2) * dt)
    accel = float(np.sum(np.maximum(0.0, traj.accel) ** 2) * dt)
    decel = float(np.sum(np.maximum(0.0, -traj.accel) ** 2) * dt)
    lat = float(np.sum((traj.speed**2 * traj.curvature) ** 2) * dt)
    curv = float(np.sum(np.maximum(0.0, np.abs(traj.curvature) - params.kappa_max) ** 2))
    if lane is not None:
        s, _, _, _ = lane.project_xy(traj.waypoints[:, 0], traj.waypoints[:, 1])
        gain = float(s[-1] - s[0])
    else:
        gain = float(
            np.hypot(
                traj.waypoints[-1, 0] - traj.waypoints[0, 0],
                traj.waypoints[-1, 1] - traj.waypoints[0, 1],
            )
        )
    return jerk, accel, decel, lat, curv, -gain


def total_cost(traj, future, lane, weights=None, params=None):
    """Weighted CostBreakdown of one trajectory against one future."""
    weights = weights or CostWeights()
    params = params or CostParams()
    overlap, proximity = collision_and_proximity(traj, future, params)
    lane_offset, boundary, speeding = traffic_rule_costs(traj, lane, params)
    jerk, accel, decel, lat, curv, progress = comfort_and_progress(traj, lane, params)
    values = {
        "collision": overlap,
        "safety_distance": proximity,
        "headway": headway_cost(traj, future, lane, params),
        "lane_offset": lane_offset,
        "road_boundary": boundary,
        "speed_limit": speeding,
        "progress": progress,
        "jerk": jerk,
        "accel": accel,
        "decel": decel,
        "lat_accel": lat,
        "curvature": curv,
    }
    return CostBreakdown.combine(values, weights)


# -- Batched evaluation for the planner --------------------------------------


class CostTensors:
    """Cost of every (action, future) and (action, contingent, future) cell.

    Contingent sums exclude the junction waypoint (owned by the action), so
    action cost + contingent cost partitions the full horizon exactly.
    """

    def __init__(self, action_costs, contingent_costs):
        self.action_costs = action_costs  # (A, K)
        self.contingent_costs = contingent_costs  # (A, C, K)


def evaluate_candidates(cands, future_set, weights=None, params=None):
    weights = weights or CostWeights()
    params = params or CostParams()
    lane = cands.lane
    A, C = cands.n_actions, cands.n_contingents
    K = future_set.k

    act_static = _static_costs(
        cands.action_s,
        cands.action_d,
        cands.action_speed,
        cands.action_accel,
        cands.action_jerk,
        cands.action_curvature,
        cands.dt,
        lane,
        weights,
        params,
        skip_first=False,
    )
    con_static = _static_costs(
        cands.contingent_s,
        cands.contingent_d[:, None, :],
        cands.contingent_speed,
        cands.contingent_accel,
        cands.contingent_jerk,
        cands.contingent_curvature,
        cands.dt,
        lane,
        weights,
        params,
        skip_first=True,
    )

    future0 = future_set.futures[0]
    ratio = future0.dt / cands.dt
    if abs(ratio - round(ratio)) > 1e-9:
        raise AlignmentError("forecast dt must be a multiple of the planner dt")
    stride = int(round(ratio))
    n_total = int(round(cands.t_action / cands.dt)) + cands.contingent_s.shape[-1] - 1
    f_idx = np.arange(stride, n_total + 1, stride)
    ta_idx = int(round(cands.t_action / cands.dt))
    act_steps = f_idx[f_idx <= ta_idx]
    con_steps = f_idx[f_idx > ta_idx] - ta_idx

    stacked = _stack_futures(future_set, lane)
    act_dyn = _dynamic_costs(
        cands.action_wp[:, act_steps],
        cands.action_heading[:, act_steps],
        cands.action_speed[:, act_steps],
        cands.action_s[:, act_steps],
        act_steps // stride - 1,
        stacked,
        weights,
        params,
    )
    wp = cands.contingent_wp[:, :, con_steps].reshape(A * C, len(con_steps), 2)
    con_dyn = _dynamic_costs(
        wp,
        cands.contingent_heading[:, :, con_steps].reshape(A * C, -1),
        cands.contingent_speed[:, :, con_steps].reshape(A * C, -1),
        cands.contingent_s[:, :, con_steps].reshape(A * C, -1),
        (con_steps + ta_idx) // stride - 1,
        stacked,
        weights,
        params,
    ).reshape(A, C, K)

    return CostTensors(
        action_costs=act_static[:, None] + act_dyn,
        contingent_costs=con_static[:, :, None] + con_dyn,
    )


def _static_costs(s, d, speed, accel, jerk, curvature, dt, lane, weights, params, skip_first):
    """Future-independent subcosts summed over each candidate row."""
    sl = np.s_[..., 1:] if skip_first else np.s_[...]
    w = weights
    lane_offset = np.sum(np.abs(d[sl]), axis=-1)
    boundary = np.sum(
        np.maximum(0.0, np.abs(d[sl]) + params.sdv_width / 2 - params.half_road_width),
        axis=-1,
    )
    speeding = np.sum(np.maximum(0.0, speed[sl] - lane.speed_limit), axis=-1)
    jerk_c = np.sum(jerk[sl] ** 2, axis=-1) * dt
    accel_c = np.sum(np.maximum(0.0, accel[sl]) ** 2, axis=-1) * dt
    decel_c = np.sum(np.maximum(0.0, -accel[sl]) ** 2, axis=-1) * dt
    lat_c = np.sum((speed[sl] ** 2 * curvature[sl]) ** 2, axis=-1) * dt
    curv_c = np.sum(np.maximum(0.0, np.abs(curvature[sl]) - params.kappa_max) ** 2, axis=-1)
    progress = -(s[..., -1] - s[..., 0])
    total = (
        w.lane_offset * lane_offset
        + w.road_boundary * boundary
        + w.speed_limit * speeding
        + w.jerk * jerk_c
        + w.accel * accel_c
        + w.decel * decel_c
        + w.lat_accel * lat_c
        + w.curvature * curv_c
        + w.progress * progress
    )
    return np.broadcast_to(total, s.shape[:-1]).copy()


class _StackedFutures:
    """All K futures as dense arrays plus lane projections, computed once."""

    def __init__(self, future_set, lane, params=None):
        self.k = future_set.k
        f0 = future_set.futures[0]
        self.n = f0.n_actors
        if self.n == 0:
            return
        self.boxes = np.stack([f.boxes for f in future_set.futures])  # (K, N, Tf, 5)
        self.centers = self.boxes[..., :2]
        self.speeds = np.stack([f.speeds for f in future_set.futures])
        self.lengths = self.boxes[:, :, 0, 3]
        self.classes = _future_classes(f0)
        flat = self.centers.reshape(-1, 2)
        s, d, _, _ = lane.project_xy(flat[:, 0], flat[:, 1])
        self.s = s.reshape(self.centers.shape[:3])
        self.d = d.reshape(self.centers.shape[:3])


def _stack_futures(future_set, lane):
    return _StackedFutures(future_set, lane)


def _dynamic_costs(wp, heading, speed, s_lane, f_steps, stacked, weights, params):
    """Collision + proximity + headway of rows (B, T) against all K futures.

    Loops over (future, actor) pairs with a candidate-cloud bounds screen:
    actor steps farther from every candidate than the interaction radius
    skip all array work.
    """
    B, T = speed.shape
    K = stacked.k
    out = np.zeros((B, K))
    if T == 0 or stacked.n == 0:
        return out

    wp_x = np.ascontiguousarray(wp[..., 0])
    wp_y = np.ascontiguousarray(wp[..., 1])
    lo_x, hi_x = wp_x.min(axis=0), wp_x.max(axis=0)  # (T,)
    lo_y, hi_y = wp_y.min(axis=0), wp_y.max(axis=0)
    v2 = speed**2
    sdv_dims = np.array([params.sdv_length, params.sdv_width])
    sdv_reach = 0.5 * np.hypot(*sdv_dims)
    consts = np.array([params.collision_constants.get(c, 1e4) for c in stacked.classes])
    d_near2 = params.d_near**2

    s_a = stacked.s[:, :, f_steps]  # (K, N, T)
    d_a = stacked.d[:, :, f_steps]
    v_a = stacked.speeds[:, :, f_steps]
    same_lane = np.abs(d_a) <= params.lane_half_width

    for k in range(K):
        best_gap = None
        for n in range(stacked.n):
            cx = stacked.centers[k, n, f_steps, 0]  # (T,)
            cy = stacked.centers[k, n, f_steps, 1]
            reach = 0.5 * np.hypot(stacked.lengths[k, n], stacked.boxes[k, n, 0, 4])
            radius = max(params.d_near, reach + sdv_reach) + 1e-9
            t_hit = np.nonzero(
                (cx >= lo_x - radius)
                & (cx <= hi_x + radius)
                & (cy >= lo_y - radius)
                & (cy <= hi_y + radius)
            )[0]
            if t_hit.size:
                dx = wp_x[:, t_hit] - cx[t_hit]
                dy = wp_y[:, t_hit] - cy[t_hit]
                dist2 = dx * dx + dy * dy  # (B, Th)
                near = dist2 < d_near2
                if np.any(near):
                    out[:, k] += weights.safety_distance * np.sum(
                        near * v2[:, t_hit], axis=1
                    )
                cand = dist2 <= (reach + sdv_reach + 1e-9) ** 2
                if np.any(cand):
                    b_i, t_j = np.nonzero(cand)
                    t_i = t_hit[t_j]
                    sdv_boxes = np.concatenate(
                        [
                            wp[b_i, t_i],
                            heading[b_i, t_i, None],
                            np.broadcast_to(sdv_dims, (b_i.size, 2)),
                        ],
                        axis=-1,
                    )
                    hits = obb_overlap_many(sdv_boxes, stacked.boxes[k, n, f_steps[t_i]])
                    if np.any(hits):
                        np.add.at(out[:, k], b_i[hits], weights.collision * consts[n])

            # Headway: lane-relative, so no xy screen; skip off-lane actors.
            if np.any(same_lane[k, n]):
                gap_n = (
                    s_a[k, n] - s_lane - 0.5 * (stacked.lengths[k, n] + params.sdv_length)
                )  # (B, T)
                valid = same_lane[k, n] & (s_a[k, n] > s_lane)
                gap_n = np.where(valid, gap_n, np.inf)
                if best_gap is None:
                    best_gap = gap_n
                    best_v = np.where(valid, v_a[k, n], 0.0)
                else:
                    closer = gap_n < best_gap
                    best_gap = np.where(closer, gap_n, best_gap)
                    best_v = np.where(closer, v_a[k, n], best_v)
        if best_gap is not None:
            d_safe = (
                speed * params.t_react
                + v2 / (2 * params.a_comfort)
                - best_v**2 / (2 * params.a_hard)
            )
            shortfall = np.where(
                np.isfinite(best_gap), np.maximum(0.0, d_safe - best_gap), 0.0
            )
            out[:, k] += weights.headway * np.sum(shortfall**2, axis=-1)
    return out
