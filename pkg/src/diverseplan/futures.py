"""Scene-level future realizations and sets of them with probabilities."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import derive_kinematics_batch


@dataclass(frozen=True)
class ScenePrediction:
    """One joint future: a trajectory per actor, plus collision boxes.

    ``trajectories`` is (N, T, 2) in world frame at ``dt`` spacing; the
    first waypoint is ``dt`` seconds after the scene timestamp. ``boxes``
    is (N, T, 5): (x, y, heading, length, width) per actor per step, with
    headings differenced from the waypoints (falling back to the actor's
    current heading when stationary).
    """

    trajectories: np.ndarray
    dt: float
    actor_ids: tuple
    boxes: np.ndarray
    speeds: np.ndarray
    actor_classes: tuple = ()

    @classmethod
    def from_waypoints(cls, waypoints, scene, dt=0.5):
        wp = np.asarray(waypoints, dtype=float)
        n = wp.shape[0]
        if n != len(scene.actors):
            raise ValueError("one trajectory per scene actor required")
        if n == 0:
            empty = np.zeros((0, wp.shape[1] if wp.ndim > 1 else 0, 5))
            return cls(wp, float(dt), (), empty, np.zeros(wp.shape[:2]), ())
        headings_now = np.array([a.pose.heading for a in scene.actors])
        speeds, _, _, headings, _ = derive_kinematics_batch(
            wp, dt, fallback_heading=headings_now
        )
        dims = np.array([[a.length, a.width] for a in scene.actors])
        boxes = np.concatenate(
            [wp, headings[..., None], np.broadcast_to(dims[:, None, :], wp.shape[:2] + (2,))],
            axis=-1,
        )
        return cls(
            trajectories=wp,
            dt=float(dt),
            actor_ids=tuple(a.id for a in scene.actors),
            boxes=boxes,
            speeds=speeds,
            actor_classes=tuple(a.actor_class for a in scene.actors),
        )

    @property
    def n_actors(self):
        return self.trajectories.shape[0]

    @property
    def n_steps(self):
        return self.trajectories.shape[1]


@dataclass(frozen=True)
class FutureSet:
    """K scene-level futures with a probability per future."""

    futures: tuple
    probabilities: np.ndarray
    latents: np.ndarray = None

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if len(self.futures) < 1:
            raise ValueError("need at least one future")
        if p.shape != (len(self.futures),):
            raise ValueError("one probability per future required")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "probabilities", p)

    @classmethod
    def uniform(cls, futures, latents=None):
        k = len(futures)
        return cls(tuple(futures), np.full(k, 1.0 / k), latents)

    def with_probabilities(self, p):
        return FutureSet(self.futures, np.asarray(p, dtype=float), self.latents)

    @property
    def k(self):
        return len(self.futures)

    def stacked_trajectories(self):
        """(K, N, T, 2) array view of all futures."""
        return np.stack([f.trajectories for f in self.futures])


def scene_l2(a, b):
    """Mean per-actor per-timestep Euclidean distance between two scene
    futures given as (N, T, 2) arrays (ScenePredictions accepted)."""
    a = a.trajectories if isinstance(a, ScenePrediction) else np.asarray(a)
    b = b.trajectories if isinstance(b, ScenePrediction) else np.asarray(b)
    if a.size == 0:
        return 0.0
    return float(np.mean(np.hypot(a[..., 0] - b[..., 0], a[..., 1] - b[..., 1])))


def plan_l2(a, b):
    """Mean per-waypoint distance between two SDV trajectories."""
    wa = a.waypoints if hasattr(a, "waypoints") else np.asarray(a)
    wb = b.waypoints if hasattr(b, "waypoints") else np.asarray(b)
    return float(np.mean(np.hypot(wa[:, 0] - wb[:, 0], wa[:, 1] - wb[:, 1])))
