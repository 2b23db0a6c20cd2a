"""Latent-variable joint trajectory forecaster.

Per-actor kinematic contexts feed a message-passing encoder/decoder pair:
the posterior encodes (context, ground-truth future) into a diagonal
Gaussian over per-actor latents, the prior is fixed standard normal, and
a deterministic decoder maps (context, latent) to future waypoints in
each actor's frame. Training maximizes the ELBO with a Huber
reconstruction term and a beta-weighted KL.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .autodiff import Adam, Tensor, concat, huber
from .futures import FutureSet, ScenePrediction
from .networks import GraphBatch, SceneInteractionModule
from .validation import check_dataset, check_fitted, check_scene

LOG_SIGMA_RANGE = (-10.0, 5.0)


@dataclass(frozen=True)
class GaussianParams:
    """Diagonal Gaussian over per-actor latents; log_sigma kept clamped."""

    mu: np.ndarray
    log_sigma: np.ndarray


@dataclass(frozen=True)
class ContextSet:
    """Per-actor feature rows plus the poses the networks need for edges."""

    features: np.ndarray  # (N, D)
    actor_ids: tuple
    poses: np.ndarray  # (N, 3) world x, y, heading


def build_contexts(scene, history_steps=10):
    """Kinematic actor contexts: history in the actor frame, speed, class,
    lane-relative offsets, and pose relative to the SDV."""
    check_scene(scene)
    rows = []
    poses = []
    sdv = scene.sdv.pose
    cs, ss = np.cos(sdv.heading), np.sin(sdv.heading)
    for actor in scene.actors:
        p = actor.pose
        c, s = np.cos(p.heading), np.sin(p.heading)
        hist = scene.history.get(actor.id)
        if hist is None or len(hist) == 0:
            local_hist = np.zeros((history_steps, 2))
        else:
            hist = np.asarray(hist, dtype=float)[-history_steps:]
            if hist.shape[0] < history_steps:
                pad = np.repeat(hist[:1], history_steps - hist.shape[0], axis=0)
                hist = np.concatenate([pad, hist], axis=0)
            dx = hist[:, 0] - p.x
            dy = hist[:, 1] - p.y
            local_hist = np.column_stack([c * dx + s * dy, -s * dx + c * dy])

        onehot = np.zeros(3)
        onehot[("vehicle", "pedestrian", "bicyclist").index(actor.actor_class)] = 1.0

        best = None
        for lane in scene.lanes:
            s_arr, d_arr, seg, _ = lane.project_xy(p.x, p.y)
            if best is None or abs(d_arr[0]) < abs(best[1]):
                heading_err = p.heading - lane.segment_headings[seg[0]]
                best = (s_arr[0], d_arr[0], heading_err, lane.total_arclength - s_arr[0])
        _, d_lane, heading_err, to_end = best

        rel_x = p.x - sdv.x
        rel_y = p.y - sdv.y
        rows.append(
            np.concatenate(
                [
                    local_hist.ravel() / 10.0,
                    [actor.speed / 10.0],
                    onehot,
                    [d_lane / 3.0, np.sin(heading_err), min(to_end, 100.0) / 50.0],
                    [
                        (cs * rel_x + ss * rel_y) / 50.0,
                        (-ss * rel_x + cs * rel_y) / 50.0,
                        np.cos(p.heading - sdv.heading),
                        np.sin(p.heading - sdv.heading),
                    ],
                ]
            )
        )
        poses.append([p.x, p.y, p.heading])
    n = len(scene.actors)
    features = np.asarray(rows) if rows else np.zeros((0, context_dim(history_steps)))
    poses = np.asarray(poses) if rows else np.zeros((0, 3))
    return ContextSet(features=features, actor_ids=tuple(a.id for a in scene.actors), poses=poses)


def context_dim(history_steps=10):
    return 2 * history_steps + 1 + 3 + 3 + 4


def world_to_actor_frames(waypoints, poses):
    """(N, T, 2) world waypoints into each actor's local frame."""
    rel = waypoints - poses[:, None, :2]
    c = np.cos(poses[:, 2])[:, None]
    s = np.sin(poses[:, 2])[:, None]
    return np.stack(
        [c * rel[..., 0] + s * rel[..., 1], -s * rel[..., 0] + c * rel[..., 1]], axis=-1
    )


def actor_frames_to_world(local, poses):
    c = np.cos(poses[:, 2])[:, None]
    s = np.sin(poses[:, 2])[:, None]
    x = c * local[..., 0] - s * local[..., 1] + poses[:, 0:1]
    y = s * local[..., 0] + c * local[..., 1] + poses[:, 1:2]
    return np.stack([x, y], axis=-1)


class TrajectoryForecaster(BaseEstimator):
    """CVAE-style joint forecaster with a fixed standard-normal prior.

    fit(scenes, futures) trains encoder and decoder on (Scene, ground
    truth future) pairs; predict(scene, k) decodes k prior samples into a
    FutureSet with uniform probabilities.
    """

    def __init__(
        self,
        latent_dim=64,
        hidden_dim=64,
        horizon_steps=10,
        forecast_dt=0.5,
        history_steps=10,
        beta=0.1,
        kl_schedule="constant",
        huber_delta=1.0,
        learning_rate=1e-3,
        n_iterations=2000,
        seed=0,
    ):
        self.latent_dim = latent_dim
        self.hidden_dim = hidden_dim
        self.horizon_steps = horizon_steps
        self.forecast_dt = forecast_dt
        self.history_steps = history_steps
        self.beta = beta
        self.kl_schedule = kl_schedule
        self.huber_delta = huber_delta
        self.learning_rate = learning_rate
        self.n_iterations = n_iterations
        self.seed = seed

    # -- construction -------------------------------------------------------

    def _build(self, rng):
        d = context_dim(self.history_steps)
        out = 2 * self.horizon_steps
        self.posterior_mu_ = SceneInteractionModule(
            d + out, self.latent_dim, rng, self.hidden_dim
        )
        self.posterior_sigma_ = SceneInteractionModule(
            d + out, self.latent_dim, rng, self.hidden_dim
        )
        self.decoder_ = SceneInteractionModule(
            d + self.latent_dim, out, rng, self.hidden_dim
        )

    def networks(self):
        check_fitted(self, "decoder_")
        return {
            "posterior_mu": self.posterior_mu_,
            "posterior_sigma": self.posterior_sigma_,
            "decoder": self.decoder_,
        }

    def decoder_checksum(self):
        return self.decoder_.checksum()

    # -- core passes ----------------------------------------------------------

    def encode_posterior(self, contexts, gt_future):
        """Diagonal Gaussian q(Z | X, Y_gt); returns Tensors for training."""
        local = world_to_actor_frames(gt_future, contexts.poses)
        node_x = np.concatenate(
            [contexts.features, local.reshape(len(contexts.actor_ids), -1) / 10.0], axis=1
        )
        graph = GraphBatch(contexts.poses)
        mu = graph.run(self.posterior_mu_, node_x)
        log_sigma = graph.run(self.posterior_sigma_, node_x).clamp(*LOG_SIGMA_RANGE)
        return mu, log_sigma

    def posterior_params(self, scene, gt_future):
        contexts = build_contexts(scene, self.history_steps)
        mu, log_sigma = self.encode_posterior(contexts, gt_future)
        return GaussianParams(mu=mu.data.copy(), log_sigma=log_sigma.data.copy())

    def sample_prior(self, n_actors, k, rng):
        return rng.standard_normal((k, n_actors, self.latent_dim))

    def decode_tensor(self, contexts, z, k=1):
        """Batched decode of k latent scenes; returns a (k*N, 2T) Tensor."""
        n = len(contexts.actor_ids)
        feats = np.tile(contexts.features, (k, 1))
        if isinstance(z, Tensor):
            z2 = z.reshape(k * n, self.latent_dim)
            node_x = concat([Tensor(feats), z2], axis=-1)
        else:
            node_x = np.concatenate([feats, np.reshape(z, (k * n, self.latent_dim))], axis=1)
        graph = GraphBatch(contexts.poses, n_graphs=k)
        return graph.run(self.decoder_, node_x)

    def decode(self, scene, z):
        """Deterministic decode of latent scenes into world-frame futures.

        ``z`` is (N, L) or (k, N, L); returns one ScenePrediction or a list.
        """
        check_fitted(self, "decoder_")
        z = np.asarray(z, dtype=float)
        single = z.ndim == 2
        if single:
            z = z[None]
        k, n = z.shape[0], len(scene.actors)
        if n == 0:
            empty = ScenePrediction.from_waypoints(
                np.zeros((0, self.horizon_steps, 2)), scene, dt=self.forecast_dt
            )
            return empty if single else [empty] * k
        contexts = build_contexts(scene, self.history_steps)
        out = self.decode_tensor(contexts, z, k=k).data
        local = out.reshape(k, n, self.horizon_steps, 2)
        preds = []
        for i in range(k):
            world = actor_frames_to_world(local[i], contexts.poses)
            preds.append(ScenePrediction.from_waypoints(world, scene, dt=self.forecast_dt))
        return preds[0] if single else preds

    def predict(self, scene, k=15, seed=0):
        """K futures from i.i.d. prior samples, uniform probabilities."""
        check_fitted(self, "decoder_")
        rng = np.random.default_rng(seed)
        z = self.sample_prior(len(scene.actors), k, rng)
        return FutureSet.uniform(self.decode(scene, z), latents=z)

    # -- training ----------------------------------------------------------------

    def loss_on_scene(self, contexts, gt_future, xi, step=0):
        """ELBO loss Tensor for one scene given reparameterization noise."""
        n = len(contexts.actor_ids)
        mu, log_sigma = self.encode_posterior(
            gt_future=gt_future, contexts=contexts
        )
        sigma = log_sigma.exp()
        z = mu + sigma * xi
        out = self.decode_tensor(contexts, z, k=1)
        local_gt = world_to_actor_frames(gt_future, contexts.poses).reshape(n, -1)
        residual = out - local_gt
        recon = huber(residual, self.huber_delta).sum() / (n * self.horizon_steps)
        var = (2.0 * log_sigma).exp()
        kl = 0.5 * (mu * mu + var - 1.0 - 2.0 * log_sigma).sum()
        return recon + self._beta_at(step) * kl, recon, kl

    def _beta_at(self, step):
        if self.kl_schedule == "constant":
            return self.beta
        if self.kl_schedule == "cyclical":
            # Linear ramp from 0 to beta over each half-cycle of 500 steps.
            phase = (step % 1000) / 500.0
            return self.beta * min(phase, 1.0)
        raise ValueError(f"unknown kl schedule {self.kl_schedule!r}")

    def fit(self, scenes, futures):
        """Train on (Scene, ground-truth future) pairs.

        ``futures`` holds one (N, T, 2) world-frame array per scene, rows
        aligned with scene.actors.
        """
        check_dataset(scenes, futures, self.horizon_steps)
        rng = np.random.default_rng(self.seed)
        self._build(rng)
        params = (
            self.posterior_mu_.parameters()
            + self.posterior_sigma_.parameters()
            + self.decoder_.parameters()
        )
        opt = Adam(params, lr=self.learning_rate)
        contexts = [build_contexts(s, self.history_steps) for s in scenes]
        order = rng.permutation(len(scenes))
        losses = []
        for step in range(self.n_iterations):
            i = int(order[step % len(scenes)])
            ctx = contexts[i]
            n = len(ctx.actor_ids)
            if n == 0:
                continue
            xi = rng.standard_normal((n, self.latent_dim))
            loss, recon, kl = self.loss_on_scene(ctx, futures[i], xi, step)
            if not np.isfinite(loss.data):
                raise FloatingPointError(
                    f"non-finite forecast loss at step {step}: recon={recon.data}, kl={kl.data}"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.data))
        self.loss_curve_ = np.asarray(losses)
        return self
