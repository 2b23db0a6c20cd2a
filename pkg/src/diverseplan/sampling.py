"""Candidate action/trajectory sampling in the Frenet frame of the route lane.

Short-term actions (1 s) are quartic longitudinal profiles on top of
two-segment quintic lateral paths; each action carries a bundle of
long-term contingent profiles (two chained quartics over the remaining
4 s) that follow the same lateral path. Generation is deterministic:
path-major ordering, then velocity index.

The hot path is fully vectorized; per-candidate profile objects are
materialized lazily for inspection and tests.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Trajectory, derive_kinematics_batch, project_to_frenet


class EmptyCandidateSetError(RuntimeError):
    """No feasible candidate (typically the SDV ran off the lane extent)."""


@dataclass(frozen=True)
class PolynomialProfile:
    """Polynomial in time (coefficients low order first) over [0, duration]."""

    coefficients: np.ndarray
    duration: float

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        object.__setattr__(
            self, "coefficients", np.asarray(self.coefficients, dtype=float)
        )

    def value(self, t):
        return np.polynomial.polynomial.polyval(t, self.coefficients)

    def deriv1(self, t):
        c = np.polynomial.polynomial.polyder(self.coefficients)
        return np.polynomial.polynomial.polyval(t, c)

    def deriv2(self, t):
        c = np.polynomial.polynomial.polyder(self.coefficients, 2)
        return np.polynomial.polynomial.polyval(t, c)


@dataclass(frozen=True)
class PiecewiseProfile:
    """Profiles chained back to back; local time restarts at each junction."""

    segments: tuple
    offsets: tuple  # global start time of each segment

    @classmethod
    def chain(cls, profiles, t_start=0.0):
        offsets = []
        t = t_start
        for p in profiles:
            offsets.append(t)
            t += p.duration
        return cls(segments=tuple(profiles), offsets=tuple(offsets))

    @property
    def t_start(self):
        return self.offsets[0]

    @property
    def t_end(self):
        return self.offsets[-1] + self.segments[-1].duration

    def _evaluate(self, t, order):
        t = np.asarray(t, dtype=float)
        out = np.empty_like(t)
        bounds = list(self.offsets[1:]) + [np.inf]
        lo = self.offsets[0]
        for seg, start, hi in zip(self.segments, self.offsets, bounds):
            mask = (t >= (start if start > lo else -np.inf)) & (t < hi)
            local = t[mask] - start
            if order == 0:
                out[mask] = seg.value(local)
            elif order == 1:
                out[mask] = seg.deriv1(local)
            else:
                out[mask] = seg.deriv2(local)
        return out

    def value(self, t):
        return self._evaluate(t, 0)

    def deriv1(self, t):
        return self._evaluate(t, 1)

    def deriv2(self, t):
        return self._evaluate(t, 2)


def quintic_coefficients(start, end, duration):
    """Closed-form quintic coefficients; inputs broadcast elementwise."""
    p0, v0, a0 = (np.asarray(x, dtype=float) for x in start)
    p1, v1, a1 = (np.asarray(x, dtype=float) for x in end)
    T = np.asarray(duration, dtype=float)
    c0, c1, c2 = p0, v0, a0 / 2.0
    dp = p1 - (c0 + c1 * T + c2 * T**2)
    dv = v1 - (c1 + 2 * c2 * T)
    da = a1 - 2 * c2
    T2, T3 = T**2, T**3
    c3 = (20 * dp - 8 * dv * T + da * T2) / (2 * T3)
    c4 = (-30 * dp + 14 * dv * T - 2 * da * T2) / (2 * T3 * T)
    c5 = (12 * dp - 6 * dv * T + da * T2) / (2 * T3 * T2)
    return np.stack(np.broadcast_arrays(c0, c1, c2, c3, c4, c5), axis=-1)


def quartic_coefficients(start, end, duration):
    """Closed-form quartic coefficients (terminal position free)."""
    p0, v0, a0 = (np.asarray(x, dtype=float) for x in start)
    v1, a1 = (np.asarray(x, dtype=float) for x in end)
    T = np.asarray(duration, dtype=float)
    c0, c1, c2 = p0, v0, a0 / 2.0
    dv = v1 - (c1 + 2 * c2 * T)
    da = a1 - 2 * c2
    c3 = dv / T**2 - da / (3 * T)
    c4 = da / (4 * T**2) - dv / (2 * T**3)
    return np.stack(np.broadcast_arrays(c0, c1, c2, c3, c4), axis=-1)


def solve_quintic(start, end, duration):
    """Quintic meeting (p, v, a) at both ends of [0, duration] exactly."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    return PolynomialProfile(quintic_coefficients(start, end, duration), float(duration))


def solve_quartic(start, end, duration):
    """Quartic meeting (p, v, a) at t=0 and (v, a) at t=duration exactly.

    Terminal position is free (velocity-keeping formulation).
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    return PolynomialProfile(quartic_coefficients(start, end, duration), float(duration))


def _horner(coeffs, t, order=0):
    """Evaluate batched polynomials on a shared time grid.

    coeffs is (..., n); t is (T,). Returns (..., T) for the requested
    derivative order.
    """
    c = np.asarray(coeffs, dtype=float)
    n = c.shape[-1]
    for _ in range(order):
        c = c[..., 1:] * np.arange(1, c.shape[-1])
        n -= 1
    out = np.broadcast_to(c[..., -1:], c.shape[:-1] + t.shape).copy()
    for k in range(n - 2, -1, -1):
        out = out * t + c[..., k : k + 1]
    return out


@dataclass(frozen=True)
class SamplerConfig:
    """Sampling grids and horizons for candidate generation."""

    t_action: float = 1.0
    horizon: float = 5.0
    dt: float = 0.1
    mid_offsets: tuple = (0.0,)
    end_offsets: tuple = (-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5)
    n_action_speeds: int = 6
    n_contingent_mid_speeds: int = 5
    n_contingent_end_speeds: int = 6
    a_max: float = 2.5
    v_margin: float = 1.0
    preset: str = "desk"
    # Explicit grids override the uniform spans when given.
    action_speed_values: tuple = None
    contingent_mid_speed_values: tuple = None
    contingent_end_speed_values: tuple = None

    @classmethod
    def from_preset(cls, name):
        if name == "desk":
            return cls()
        if name == "paper":
            return cls(
                mid_offsets=(-1.5, -0.75, 0.0, 0.75, 1.5),
                end_offsets=(-2.1, -1.5, -0.9, -0.3, 0.3, 0.9, 1.5, 2.1),
                n_action_speeds=6,
                n_contingent_mid_speeds=16,
                n_contingent_end_speeds=16,
                preset="paper",
            )
        raise ValueError(f"unknown sampler preset {name!r}")

    @classmethod
    def single(cls, speed):
        """Degenerate config: one zero-offset path holding one speed."""
        return cls(
            mid_offsets=(0.0,),
            end_offsets=(0.0,),
            action_speed_values=(speed,),
            contingent_mid_speed_values=(speed,),
            contingent_end_speed_values=(speed,),
            preset="single",
        )


def generate_lateral_paths(sdv_frenet, config):
    """Two chained quintics per (mid, end) offset pair, C2 at the junction."""
    half = config.horizon / 2.0
    start = (sdv_frenet.d, sdv_frenet.d_dot, sdv_frenet.d_ddot)
    paths = []
    for mid in config.mid_offsets:
        first = solve_quintic(start, (mid, 0.0, 0.0), half)
        for end in config.end_offsets:
            second = solve_quintic((mid, 0.0, 0.0), (end, 0.0, 0.0), config.horizon - half)
            paths.append(PiecewiseProfile.chain([first, second]))
    return paths


def _speed_grid(v_low, v_high, n):
    if n <= 1:
        return np.array([max(v_high, 0.0)])
    return np.linspace(max(v_low, 0.0), max(v_high, 0.0), n)


def _stop_and_hold_batch(s, v, times):
    """Clamp batched longitudinal rollouts at the first reverse-speed crossing.

    Rows that dip below zero speed are frozen from the crossing onward at the
    linearly interpolated stop position; earlier samples keep their values
    with speed floored at zero.
    """
    s = np.asarray(s, dtype=float)
    v = np.asarray(v, dtype=float)
    neg = v < 0.0
    rows = np.any(neg, axis=-1)
    if not np.any(rows):
        return s, np.maximum(v, 0.0)
    s = s.copy()
    v_out = np.maximum(v, 0.0)
    idx = np.argmax(neg, axis=-1)  # first negative index per row
    flat_s = s.reshape(-1, s.shape[-1])
    flat_v = v.reshape(-1, v.shape[-1])
    flat_vout = v_out.reshape(-1, v.shape[-1])
    flat_idx = idx.reshape(-1)
    flat_rows = rows.reshape(-1)
    tgrid = np.arange(s.shape[-1])
    for r in np.nonzero(flat_rows)[0]:
        i = int(flat_idx[r])
        if i == 0:
            stop_s = flat_s[r, 0]
        else:
            v0, v1 = flat_v[r, i - 1], flat_v[r, i]
            frac = v0 / (v0 - v1) if v0 > v1 else 0.0
            dtstep = times[i] - times[i - 1]
            # Speed ramps linearly to zero over frac*dtstep.
            stop_s = flat_s[r, i - 1] + 0.5 * v0 * frac * dtstep
        flat_s[r, tgrid >= i] = stop_s
        flat_vout[r, tgrid >= i] = 0.0
    return flat_s.reshape(s.shape), flat_vout.reshape(v.shape)


@dataclass(frozen=True)
class PlanCandidate:
    """One short-term action plus its bundle of contingent trajectories."""

    action: Trajectory
    contingents: tuple
    path_id: int
    action_profile: PolynomialProfile = None
    lateral_path: PiecewiseProfile = None
    contingent_profiles: tuple = ()


class CandidateSet:
    """Struct-of-arrays candidate pool; indexable as PlanCandidate views.

    Shapes: A actions with Ta waypoints each; C contingents per action with
    Tc waypoints each (the first contingent waypoint repeats the action's
    last). Contingents of one action all share that action's lateral path.
    """

    def __init__(
        self,
        lane,
        dt,
        t_action,
        action_wp,
        action_s,
        action_d,
        contingent_wp,
        contingent_s,
        contingent_d,
        path_ids,
        profile_args,
    ):
        self.lane = lane
        self.dt = float(dt)
        self.t_action = float(t_action)
        self.action_wp = action_wp  # (A, Ta, 2)
        self.action_s = action_s  # (A, Ta)
        self.action_d = action_d  # (A, Ta)
        self.contingent_wp = contingent_wp  # (A, C, Tc, 2)
        self.contingent_s = contingent_s  # (A, C, Tc)
        self.contingent_d = contingent_d  # (A, Tc)
        self.path_ids = path_ids
        self._profile_args = profile_args  # for lazy profile reconstruction

        fallback = lane.heading_at(action_s[:, 0])
        (
            self.action_speed,
            self.action_accel,
            self.action_jerk,
            self.action_heading,
            self.action_curvature,
        ) = derive_kinematics_batch(action_wp, dt, fallback_heading=fallback)
        (
            self.contingent_speed,
            self.contingent_accel,
            self.contingent_jerk,
            self.contingent_heading,
            self.contingent_curvature,
        ) = derive_kinematics_batch(contingent_wp, dt, fallback_heading=fallback[:, None])

    @property
    def n_actions(self):
        return self.action_wp.shape[0]

    @property
    def n_contingents(self):
        return self.contingent_wp.shape[1]

    def __len__(self):
        return self.n_actions

    def action_trajectory(self, i):
        return Trajectory(self.action_wp[i], self.dt, t0=0.0)

    def contingent_trajectory(self, i, j):
        return Trajectory(self.contingent_wp[i, j], self.dt, t0=self.t_action)

    def full_trajectory(self, i, j):
        wp = np.concatenate([self.action_wp[i], self.contingent_wp[i, j, 1:]], axis=0)
        return Trajectory(wp, self.dt, t0=0.0)

    def __getitem__(self, i):
        if not (0 <= i < self.n_actions):
            raise IndexError(i)
        args = self._profile_args
        sdv_state = args["sdv_state"]
        ta = self.t_action
        half_c = args["half_contingent"]
        v_end = args["action_end_speeds"][i]
        action_profile = solve_quartic(sdv_state, (v_end, 0.0), ta)
        end_s = float(self.action_s[i, -1])
        end_v = float(max(action_profile.deriv1(np.array([ta]))[0], 0.0))
        end_a = float(action_profile.deriv2(np.array([ta]))[0]) if end_v > 0 else 0.0
        profiles = []
        for v_mid, v_fin in args["contingent_speeds"][i]:
            first = solve_quartic((end_s, end_v, end_a), (v_mid, 0.0), half_c)
            s_mid = float(first.value(np.array([half_c]))[0])
            second = solve_quartic((s_mid, v_mid, 0.0), (v_fin, 0.0), half_c)
            profiles.append(PiecewiseProfile.chain([first, second]))
        contingents = tuple(
            self.contingent_trajectory(i, j) for j in range(self.n_contingents)
        )
        return PlanCandidate(
            action=self.action_trajectory(i),
            contingents=contingents,
            path_id=int(self.path_ids[i]),
            action_profile=action_profile,
            lateral_path=args["paths"][self.path_ids[i]],
            contingent_profiles=tuple(profiles),
        )


def generate_candidates(scene, lane, config, sdv_accel=0.0):
    """Sample the full candidate set for the SDV on the given route lane."""
    fs = project_to_frenet(scene.sdv, lane, accel=sdv_accel)
    if fs.s >= lane.total_arclength - 1e-6:
        raise EmptyCandidateSetError("SDV is at or beyond the lane end")

    paths = generate_lateral_paths(fs, config)
    n_paths = len(paths)
    ta = config.t_action
    horizon = config.horizon
    dt = config.dt
    n_a = int(round(ta / dt)) + 1
    n_c = int(round((horizon - ta) / dt)) + 1
    t_action = np.arange(n_a) * dt
    t_conting = np.arange(n_c) * dt  # local time from the action end

    v_limit = lane.speed_limit * config.v_margin
    if config.action_speed_values is not None:
        action_speeds = np.asarray(config.action_speed_values, dtype=float)
    else:
        v_hi = min(v_limit, fs.s_dot + config.a_max * ta)
        action_speeds = _speed_grid(0.0, v_hi, config.n_action_speeds)
    n_v = action_speeds.shape[0]

    # Longitudinal action profiles are shared across lateral paths.
    act_coeffs = quartic_coefficients(
        (np.full(n_v, fs.s), np.full(n_v, fs.s_dot), np.full(n_v, fs.s_ddot)),
        (action_speeds, np.zeros(n_v)),
        ta,
    )
    act_s = _horner(act_coeffs, t_action)
    act_v = _horner(act_coeffs, t_action, order=1)
    act_s, act_v = _stop_and_hold_batch(act_s, act_v, t_action)
    act_a_end = _horner(act_coeffs, np.array([ta]), order=2)[:, 0]
    end_v = act_v[:, -1]
    end_s = act_s[:, -1]
    end_a = np.where(end_v > 0, act_a_end, 0.0)

    # Contingent grids conditioned on each unique action end state.
    half_c = (horizon - ta) / 2.0
    mid_list, fin_list = [], []
    for k in range(n_v):
        v_hi_c = min(v_limit, end_v[k] + config.a_max * (horizon - ta))
        if config.contingent_mid_speed_values is not None:
            mids = np.asarray(config.contingent_mid_speed_values, dtype=float)
        else:
            mids = _speed_grid(0.0, v_hi_c, config.n_contingent_mid_speeds)
        if config.contingent_end_speed_values is not None:
            fins = np.asarray(config.contingent_end_speed_values, dtype=float)
        else:
            fins = _speed_grid(0.0, v_hi_c, config.n_contingent_end_speeds)
        mm, ff = np.meshgrid(mids, fins, indexing="ij")
        mid_list.append(mm.ravel())
        fin_list.append(ff.ravel())
    mids = np.stack(mid_list)  # (n_v, C)
    fins = np.stack(fin_list)
    n_cont = mids.shape[1]

    first_coeffs = quartic_coefficients(
        (
            np.repeat(end_s, n_cont).reshape(n_v, n_cont),
            np.repeat(end_v, n_cont).reshape(n_v, n_cont),
            np.repeat(end_a, n_cont).reshape(n_v, n_cont),
        ),
        (mids, np.zeros_like(mids)),
        half_c,
    )
    s_mid = _horner(first_coeffs, np.array([half_c]))[..., 0]
    second_coeffs = quartic_coefficients(
        (s_mid, mids, np.zeros_like(mids)),
        (fins, np.zeros_like(fins)),
        half_c,
    )
    t_lo = t_conting[t_conting < half_c]
    t_hi = t_conting[t_conting >= half_c] - half_c
    con_s = np.concatenate(
        [_horner(first_coeffs, t_lo), _horner(second_coeffs, t_hi)], axis=-1
    )
    con_v = np.concatenate(
        [_horner(first_coeffs, t_lo, order=1), _horner(second_coeffs, t_hi, order=1)],
        axis=-1,
    )
    con_s, con_v = _stop_and_hold_batch(con_s, con_v, t_conting)

    # Feasibility: drop longitudinal rows whose action or any contingent
    # leaves the lane extent.
    ok = (act_s[:, -1] <= lane.total_arclength + 1e-9) & np.all(
        con_s[:, :, -1] <= lane.total_arclength + 1e-9, axis=1
    )
    keep = np.nonzero(ok)[0]
    if keep.size == 0:
        raise EmptyCandidateSetError("all sampled candidates leave the lane extent")
    act_s, act_v = act_s[keep], act_v[keep]
    con_s, con_v = con_s[keep], con_v[keep]
    kept_speeds = action_speeds[keep]
    kept_mids, kept_fins = mids[keep], fins[keep]
    n_v = keep.size

    # Lateral offsets per path on both grids.
    d_act = np.stack([p.value(t_action) for p in paths])  # (P, Ta)
    d_con = np.stack([p.value(ta + t_conting) for p in paths])  # (P, Tc)

    # Assemble path-major candidate arrays: A = n_paths * n_v.
    A = n_paths * n_v
    action_s_full = np.tile(act_s, (n_paths, 1))
    action_d_full = np.repeat(d_act, n_v, axis=0)
    conting_s_full = np.tile(con_s, (n_paths, 1, 1))
    conting_d_full = np.repeat(d_con, n_v, axis=0)
    path_ids = np.repeat(np.arange(n_paths), n_v)

    action_wp = lane.xy_at(action_s_full.ravel(), action_d_full.ravel()).reshape(A, n_a, 2)
    conting_wp = lane.xy_at(
        conting_s_full.ravel(),
        np.repeat(conting_d_full[:, None, :], n_cont, axis=1).ravel(),
    ).reshape(A, n_cont, n_c, 2)

    profile_args = {
        "sdv_state": (fs.s, fs.s_dot, fs.s_ddot),
        "half_contingent": half_c,
        "paths": tuple(paths),
        "action_end_speeds": np.tile(kept_speeds, n_paths),
        "contingent_speeds": [
            list(zip(kept_mids[i % n_v], kept_fins[i % n_v])) for i in range(A)
        ],
    }

    return CandidateSet(
        lane=lane,
        dt=dt,
        t_action=ta,
        action_wp=action_wp,
        action_s=action_s_full,
        action_d=action_d_full,
        contingent_wp=conting_wp,
        contingent_s=conting_s_full,
        contingent_d=conting_d_full,
        path_ids=path_ids,
        profile_args=profile_args,
    )
