"""Scenario scorer: a probability for each of the K predicted futures.

Each future is embedded by a shared message-passing pass over (actor
context, that future's trajectories in the actor frame), mean-pooled over
actors, and read out to one logit; the shared weights make the scores
permutation-consistent over futures. Trained to match a softmax target
built from distances to the ground-truth future.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .autodiff import Adam, Tensor
from .forecasting import build_contexts, world_to_actor_frames
from .futures import scene_l2
from .networks import GraphBatch, MLP, SceneInteractionModule
from .validation import check_fitted, check_future_set

PROBABILITY_FLOOR = 1e-12


def target_distribution(future_set, gt_future, alpha=10.0):
    """Softmax over negative scaled distances to the ground truth."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    d = np.array([scene_l2(f, gt_future) for f in future_set.futures])
    logits = -alpha * d
    logits -= logits.max()
    q = np.exp(logits)
    return q / q.sum()


def forward_kl(p, q):
    """KL(p || q) with a floor on q; nonnegative, 0 iff p = q."""
    p = np.asarray(p, dtype=float)
    q = np.maximum(np.asarray(q, dtype=float), PROBABILITY_FLOOR)
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


class ScenarioScorer(BaseEstimator):
    """Learned categorical distribution over the K futures of a set."""

    def __init__(
        self,
        k=15,
        hidden_dim=128,
        alpha=10.0,
        kl_direction="forward",
        learning_rate=1e-3,
        n_iterations=500,
        seed=0,
    ):
        self.k = k
        self.hidden_dim = hidden_dim
        self.alpha = alpha
        self.kl_direction = kl_direction
        self.learning_rate = learning_rate
        self.n_iterations = n_iterations
        self.seed = seed

    def _build(self, rng, context_d, horizon_steps):
        self.horizon_steps_ = horizon_steps
        self.embed_net_ = SceneInteractionModule(
            context_d + 2 * horizon_steps, self.hidden_dim, rng, self.hidden_dim
        )
        self.logit_head_ = MLP([self.hidden_dim, self.hidden_dim, 1], rng)

    def networks(self):
        check_fitted(self, "embed_net_")
        return {"embed_net": self.embed_net_, "logit_head": self.logit_head_}

    def logits_tensor(self, contexts, future_set):
        """K logits; futures batch as K disjoint copies of the scene graph."""
        n = contexts.features.shape[0]
        locals_ = np.stack(
            [
                world_to_actor_frames(f.trajectories, contexts.poses).reshape(n, -1)
                for f in future_set.futures
            ]
        )  # (K, N, 2T)
        node_x = np.concatenate(
            [np.tile(contexts.features, (future_set.k, 1)), locals_.reshape(future_set.k * n, -1) / 10.0],
            axis=1,
        )
        graph = GraphBatch(contexts.poses, n_graphs=future_set.k)
        states = graph.run(self.embed_net_, node_x)  # (K*N, H)
        pooled = states.reshape(future_set.k, n, self.hidden_dim).mean(axis=1)
        return self.logit_head_(pooled).reshape(future_set.k)

    def predict_proba(self, scene, future_set):
        """Probabilities for the K futures; permutation-consistent."""
        check_fitted(self, "embed_net_")
        check_future_set(future_set, self.k)
        if len(scene.actors) == 0:
            return np.full(future_set.k, 1.0 / future_set.k)
        contexts = build_contexts(scene)
        logits = self.logits_tensor(contexts, future_set).data
        return softmax(logits)

    def score_futures(self, scene, future_set):
        """FutureSet with learned probabilities attached."""
        return future_set.with_probabilities(self.predict_proba(scene, future_set))

    def loss_tensor(self, contexts, future_set, q):
        logits = self.logits_tensor(contexts, future_set)
        z = logits - logits.max()
        log_p = z - z.exp().sum().log()
        p = log_p.exp()
        q = np.maximum(np.asarray(q, dtype=float), PROBABILITY_FLOOR)
        if self.kl_direction == "forward":
            # KL(p_psi || q): mode-seeking, as stated.
            return (p * (log_p - np.log(q))).sum()
        if self.kl_direction == "reversed":
            return -(q * log_p).sum() + float(np.sum(q * np.log(q)))
        raise ValueError(f"unknown kl direction {self.kl_direction!r}")

    def fit(self, scenes, future_sets, gt_futures):
        """Match the distance-based target distribution on each scene."""
        if not (len(scenes) == len(future_sets) == len(gt_futures)):
            raise ValueError("scenes, future_sets and gt_futures must align")
        rng = np.random.default_rng(self.seed)
        contexts = [build_contexts(s) for s in scenes]
        usable = [i for i, c in enumerate(contexts) if c.features.shape[0] > 0]
        if not usable:
            raise ValueError("no scenes with actors to train on")
        first = future_sets[usable[0]].futures[0]
        self._build(rng, contexts[usable[0]].features.shape[1], first.n_steps)
        targets = [
            target_distribution(future_sets[i], gt_futures[i], self.alpha) if i in set(usable) else None
            for i in range(len(scenes))
        ]
        params = self.embed_net_.parameters() + self.logit_head_.parameters()
        opt = Adam(params, lr=self.learning_rate)
        order = rng.permutation(len(usable))
        losses = []
        for step in range(self.n_iterations):
            i = usable[int(order[step % len(usable)])]
            loss = self.loss_tensor(contexts[i], future_sets[i], targets[i])
            if not np.isfinite(loss.data):
                raise FloatingPointError(f"non-finite scorer loss at step {step}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.data))
        self.loss_curve_ = np.asarray(losses)
        return self


def softmax(logits):
    z = np.asarray(logits, dtype=float)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()
