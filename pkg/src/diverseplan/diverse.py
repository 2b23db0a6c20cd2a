"""Planning-centric diverse sampler.

K affine heads map one shared standard-normal noise vector into K latent
scenes (means from one message-passing network, diagonal scales from
another); decoding them through the frozen forecaster decoder yields K
futures in one batched pass. Training balances reconstruction, a general
diversity kernel, a KL leash to the prior, and a REINFORCE term that
rewards futures whose contingency plans differ. Inference takes the
noise-free set (eps = 0), so repeated calls are bit-identical.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .autodiff import Adam, Tensor, concat
from .forecasting import build_contexts
from .futures import FutureSet, ScenePrediction, plan_l2, scene_l2
from .networks import GraphBatch, SceneInteractionModule
from .validation import check_fitted

LOG_TWO_PI = float(np.log(2.0 * np.pi))
VAR_FLOOR = 1e-12


class DecoderMutatedError(RuntimeError):
    """The frozen decoder changed during sampler training."""


# -- standalone energy terms (numpy; these are the spec-level operations) ---


def energy_reconstruction(futures, gt_future):
    """Smallest scene distance between any future and the ground truth."""
    return min(scene_l2(f, gt_future) for f in futures)


def planning_reward(plans):
    """Pairwise plan diversity: (1/K) sum over ordered pairs of plan
    distances."""
    k = len(plans)
    if k < 2:
        return 0.0
    total = 0.0
    for i in range(k):
        for j in range(k):
            if i != j:
                total += plan_l2(plans[i], plans[j])
    return total / k


def energy_planning_value(plans, log_densities):
    """REINFORCE surrogate value per the score-function estimator: mean
    over ordered pairs of -log p(Z_i, Z_j) * plan distance."""
    k = len(plans)
    if k < 2:
        return 0.0
    total = 0.0
    for i in range(k):
        for j in range(k):
            if i != j:
                total += -(log_densities[i] + log_densities[j]) * plan_l2(plans[i], plans[j])
    return total / (k * (k - 1))


def energy_general(futures, sigma_d=10000.0):
    """Mean pairwise similarity kernel exp(-distance / sigma_d)."""
    k = len(futures)
    if k < 2:
        return 0.0
    total = 0.0
    for i in range(k):
        for j in range(k):
            if i != j:
                total += np.exp(-scene_l2(futures[i], futures[j]) / sigma_d)
    return total / (k * (k - 1))


def kl_to_prior(mus, sigmas):
    """Sum over heads of KL(N(mu, diag sigma^2) || N(0, I)), closed form."""
    mus = np.asarray(mus)
    var = np.asarray(sigmas) ** 2 + VAR_FLOOR
    return float(0.5 * np.sum(mus**2 + var - 1.0 - np.log(var)))


def gaussian_log_density(z, mu, var):
    return float(np.sum(-0.5 * LOG_TWO_PI - 0.5 * np.log(var) - (z - mu) ** 2 / (2 * var)))


class DiverseSampler(BaseEstimator):
    """K-head latent mapping trained against the contingency planner.

    fit(scenes, futures, forecaster, plan_fn) optimizes the head networks
    with the forecaster's decoder frozen; predict(scene, forecaster)
    returns the deterministic eps=0 FutureSet with uniform probabilities.
    """

    def __init__(
        self,
        k=15,
        hidden_dim=64,
        recon_weight=0.02,
        plan_weight=0.01,
        general_weight=10.0,
        sigma_d=10000.0,
        beta=1.0,
        baseline=True,
        n_noise_draws=1,
        learning_rate=1e-3,
        n_iterations=300,
        seed=0,
    ):
        self.k = k
        self.hidden_dim = hidden_dim
        self.recon_weight = recon_weight
        self.plan_weight = plan_weight
        self.general_weight = general_weight
        self.sigma_d = sigma_d
        self.beta = beta
        self.baseline = baseline
        self.n_noise_draws = n_noise_draws
        self.learning_rate = learning_rate
        self.n_iterations = n_iterations
        self.seed = seed

    def _build(self, rng, context_d, latent_dim):
        self.latent_dim_ = latent_dim
        # Heads start at the prior: scales one, means zero.
        self.scale_net_ = SceneInteractionModule(
            context_d, self.k * latent_dim, rng, self.hidden_dim,
            head_zero_last=True, head_last_bias=1.0,
        )
        self.mean_net_ = SceneInteractionModule(
            context_d, self.k * latent_dim, rng, self.hidden_dim,
            head_zero_last=True, head_last_bias=0.0,
        )

    def networks(self):
        check_fitted(self, "mean_net_")
        return {"scale_net": self.scale_net_, "mean_net": self.mean_net_}

    # -- latent mapping -------------------------------------------------------

    def map_latents_tensor(self, contexts, eps):
        """All K latent scenes from one shared noise vector.

        Returns (z, mu, scale) Tensors shaped (K, N, L); eps is (N, L) or
        zero for deterministic inference.
        """
        n = contexts.features.shape[0]
        L = self.latent_dim_
        graph = GraphBatch(contexts.poses)
        a = graph.run(self.scale_net_, contexts.features)  # (N, K*L)
        b = graph.run(self.mean_net_, contexts.features)
        mu = b.reshape(n, self.k, L).transpose((1, 0, 2))
        scale = a.reshape(n, self.k, L).transpose((1, 0, 2))
        eps = np.asarray(eps, dtype=float)
        z = mu + scale * eps[None, :, :]
        return z, mu, scale

    def map_latents(self, scene, eps):
        """Numpy view of the K latent scenes for a given shared noise."""
        check_fitted(self, "mean_net_")
        contexts = build_contexts(scene)
        z, mu, scale = self.map_latents_tensor(contexts, eps)
        return z.data.copy(), mu.data.copy(), scale.data.copy()

    def _decode_world_tensor(self, forecaster, contexts, z):
        """Decode (K, N, L) latents into a (K, N, T, 2) world-frame Tensor."""
        n = contexts.features.shape[0]
        kk = z.shape[0] if isinstance(z, Tensor) else np.asarray(z).shape[0]
        out = forecaster.decode_tensor(contexts, z, k=kk)
        local = out.reshape(kk, n, forecaster.horizon_steps, 2)
        c = np.cos(contexts.poses[:, 2])[None, :, None]
        s = np.sin(contexts.poses[:, 2])[None, :, None]
        x = local[..., 0]
        y = local[..., 1]
        wx = x * c - y * s + contexts.poses[None, :, 0:1]
        wy = x * s + y * c + contexts.poses[None, :, 1:2]
        return concat(
            [wx.reshape(kk, n, -1, 1), wy.reshape(kk, n, -1, 1)], axis=-1
        )

    def predict(self, scene, forecaster):
        """Deterministic eps=0 FutureSet (uniform placeholder probabilities)."""
        check_fitted(self, "mean_net_")
        n = len(scene.actors)
        if n == 0:
            empty = ScenePrediction.from_waypoints(
                np.zeros((0, forecaster.horizon_steps, 2)), scene, dt=forecaster.forecast_dt
            )
            return FutureSet.uniform(
                [empty] * self.k, latents=np.zeros((self.k, 0, self.latent_dim_))
            )
        contexts = build_contexts(scene)
        z, _, _ = self.map_latents_tensor(contexts, np.zeros((n, self.latent_dim_)))
        preds = forecaster.decode(scene, z.data)
        return FutureSet.uniform(preds, latents=z.data.copy())

    # -- training objective -----------------------------------------------------

    @staticmethod
    def _pairwise_scene_l2_tensor(world):
        """(K, K) mean waypoint distance Tensor between decoded futures."""
        kk, n = world.shape[0], world.shape[1]
        xi = world.reshape(kk, 1, n, -1, 2)
        xj = world.reshape(1, kk, n, -1, 2)
        diff = xi - xj
        d2 = diff[..., 0] ** 2 + diff[..., 1] ** 2
        return (d2 + VAR_FLOOR).sqrt().mean(axis=-1).mean(axis=-1)

    def reconstruction_energy_tensor(self, world, gt_future):
        kk, n = world.shape[0], world.shape[1]
        gt = np.asarray(gt_future)[None]
        diff = world - Tensor(np.broadcast_to(gt, world.data.shape))
        d2 = diff[..., 0] ** 2 + diff[..., 1] ** 2
        per_k = (d2 + VAR_FLOOR).sqrt().reshape(kk, -1).mean(axis=-1)
        return per_k.min()

    def general_energy_tensor(self, world):
        kk = world.shape[0]
        if kk < 2:
            return Tensor(0.0)
        dists = self._pairwise_scene_l2_tensor(world)
        total = (-dists / self.sigma_d).exp().sum() - kk  # drop exp(0) diagonal
        return total / (kk * (kk - 1))

    def kl_tensor(self, mu, scale):
        var = scale * scale + VAR_FLOOR
        return 0.5 * (mu * mu + var - 1.0 - var.log()).sum()

    def log_density_tensor(self, z_values, mu, scale):
        """Per-head log p(Z_k | X) with gradients into mu and scale only."""
        var = scale * scale + VAR_FLOOR
        z = np.asarray(z_values)
        quad = (Tensor(z) - mu) ** 2 / (2.0 * var)
        return (-0.5 * LOG_TWO_PI - 0.5 * var.log() - quad).reshape(z.shape[0], -1).sum(
            axis=-1
        )

    def planning_energy_tensor(self, log_p, plans):
        """REINFORCE surrogate: rewards are constants, gradient flows
        through the head log-densities."""
        kk = len(plans)
        if kk < 2:
            return Tensor(0.0), 0.0
        r = np.zeros((kk, kk))
        for i in range(kk):
            for j in range(kk):
                if i != j:
                    r[i, j] = plan_l2(plans[i], plans[j])
        raw = energy_planning_value(plans, list(log_p.data))
        off = ~np.eye(kk, dtype=bool)
        base = float(r[off].mean()) if self.baseline else 0.0
        weights = np.array([np.sum(r[i, :] + r[:, i] - 2 * base * off[i]) for i in range(kk)])
        surrogate = -(log_p * weights).sum() / (kk * (kk - 1))
        return surrogate, raw

    def fit(self, scenes, futures, forecaster, plan_fn):
        """Train the heads with the decoder frozen.

        plan_fn(scene, future_set) must return the planner's per-future
        full-horizon trajectories for the REINFORCE reward.
        """
        rng = np.random.default_rng(self.seed)
        first_ctx = build_contexts(scenes[0])
        self._build(rng, first_ctx.features.shape[1], forecaster.latent_dim)

        decoder = forecaster.decoder_
        checksum_before = decoder.checksum()
        frozen = decoder.parameters()
        for p in frozen:
            p.requires_grad = False

        params = self.scale_net_.parameters() + self.mean_net_.parameters()
        opt = Adam(params, lr=self.learning_rate)
        contexts = [build_contexts(s) for s in scenes]
        order = rng.permutation(len(scenes))
        curves = {"total": [], "recon": [], "plan": [], "general": [], "kl": []}
        try:
            for step in range(self.n_iterations):
                i = int(order[step % len(scenes)])
                ctx = contexts[i]
                n = ctx.features.shape[0]
                if n == 0:
                    continue
                loss_terms = []
                plan_energy_raw = 0.0
                for _ in range(self.n_noise_draws):
                    eps = rng.standard_normal((n, self.latent_dim_))
                    z, mu, scale = self.map_latents_tensor(ctx, eps)
                    world = self._decode_world_tensor(forecaster, ctx, z)
                    e_r = self.reconstruction_energy_tensor(world, futures[i])
                    e_d = self.general_energy_tensor(world)
                    kl = self.kl_tensor(mu, scale)
                    loss = self.recon_weight * e_r + self.general_weight * e_d + self.beta * kl
                    if self.plan_weight > 0.0:
                        fset = FutureSet.uniform(
                            [
                                ScenePrediction.from_waypoints(
                                    world.data[kidx], scenes[i], dt=forecaster.forecast_dt
                                )
                                for kidx in range(self.k)
                            ]
                        )
                        plans = plan_fn(scenes[i], fset)
                        log_p = self.log_density_tensor(z.data, mu, scale)
                        e_p, raw = self.planning_energy_tensor(log_p, plans)
                        loss = loss + self.plan_weight * e_p
                        plan_energy_raw += raw
                    loss_terms.append((loss, e_r, e_d, kl))
                total = loss_terms[0][0]
                for extra in loss_terms[1:]:
                    total = total + extra[0]
                if self.n_noise_draws > 1:
                    total = total / self.n_noise_draws
                if not np.isfinite(total.data):
                    raise FloatingPointError(f"non-finite sampler loss at step {step}")
                opt.zero_grad()
                total.backward()
                opt.step()
                curves["total"].append(float(total.data))
                curves["recon"].append(float(loss_terms[0][1].data))
                curves["general"].append(float(loss_terms[0][2].data))
                curves["kl"].append(float(loss_terms[0][3].data))
                curves["plan"].append(plan_energy_raw / self.n_noise_draws)
        finally:
            for p in frozen:
                p.requires_grad = True
        if decoder.checksum() != checksum_before:
            raise DecoderMutatedError("decoder weights changed during sampler training")
        self.energy_curves_ = {k: np.asarray(v) for k, v in curves.items()}
        return self
