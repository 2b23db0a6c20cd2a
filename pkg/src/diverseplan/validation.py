"""Input validation helpers shared by the estimators and the harness."""
from __future__ import annotations

import numpy as np


class NotFittedError(RuntimeError):
    pass


def check_fitted(estimator, attribute):
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted; call fit() or load a checkpoint"
        )


def check_scene(scene):
    from .geometry import Scene

    if not isinstance(scene, Scene):
        raise TypeError(f"expected a Scene, got {type(scene).__name__}")
    return scene


def check_dataset(scenes, futures, horizon_steps):
    if len(scenes) == 0:
        raise ValueError("empty dataset")
    if len(scenes) != len(futures):
        raise ValueError("scenes and futures must have equal length")
    for scene, fut in zip(scenes, futures):
        check_scene(scene)
        fut = np.asarray(fut)
        if fut.shape != (len(scene.actors), horizon_steps, 2):
            raise ValueError(
                f"future shape {fut.shape} does not match "
                f"({len(scene.actors)}, {horizon_steps}, 2)"
            )
        if not np.all(np.isfinite(fut)):
            raise ValueError("futures must be finite")


def check_probabilities(p, k):
    p = np.asarray(p, dtype=float)
    if p.shape != (k,):
        raise ValueError(f"expected {k} probabilities, got shape {p.shape}")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
        raise ValueError("probabilities must be nonnegative and sum to 1")
    return p


def check_future_set(future_set, k=None):
    from .futures import FutureSet

    if not isinstance(future_set, FutureSet):
        raise TypeError("expected a FutureSet")
    if k is not None and future_set.k != k:
        raise ValueError(f"expected {k} futures, got {future_set.k}")
    return future_set
