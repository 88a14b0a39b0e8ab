"""Adversarial imitation in a latent representation space.

A discriminator over (state latent, action latent) pairs separates expert
demonstrations from agent rollouts; its output defines the agent's reward
r = -log(1 - D). The plain-GAIL baseline runs the exact same loop with
identity latent maps, so the comparison isolates the representation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import envs
from .envs import RobotConfig
from .nets import AdamState, Mlp, adam_step
from .ppo import Policy, PpoConfig, collect_rollout, ppo_update
from .represent import LatentPair, RepresentationModule
from .trajectories import DemoSet

LOGIT_CLAMP = 10.0
PROB_EPS = 1e-6


class IdentityLatentMap:
    """Raw observations/actions in place of latents (the GAIL baseline)."""

    def __init__(self, obs_dim: int, act_dim: int):
        self.z_state_dim = obs_dim
        self.z_action_dim = act_dim

    def state_latents(self, obs, params) -> np.ndarray:
        return np.atleast_2d(np.asarray(obs, dtype=np.float64))

    def action_latents(self, actions, params) -> np.ndarray:
        return np.atleast_2d(np.asarray(actions, dtype=np.float64))


class ReprLatentMap:
    """Encoder means of a trained representation module."""

    def __init__(self, module: RepresentationModule):
        self.module = module
        self.z_state_dim = module.settings.z_state_dim
        self.z_action_dim = module.settings.z_action_dim

    def state_latents(self, obs, params) -> np.ndarray:
        return np.atleast_2d(self.module.encode_state(obs, params).mean)

    def action_latents(self, actions, params) -> np.ndarray:
        return np.atleast_2d(self.module.encode_action(actions, params).mean)


def encode_demos(latent_map, demos: DemoSet) -> tuple:
    """Encode every demo transition with its own source configuration."""
    zs_parts, za_parts = [], []
    for rec in demos.records:
        obs = np.asarray([s.obs for s in rec.steps])
        act = np.asarray([s.action for s in rec.steps])
        zs_parts.append(latent_map.state_latents(obs, rec.config.params))
        za_parts.append(latent_map.action_latents(act, rec.config.params))
    return np.concatenate(zs_parts), np.concatenate(za_parts)


@dataclass
class Discriminator:
    net: Mlp
    opt: AdamState

    @classmethod
    def create(cls, z_state_dim, z_action_dim, *, hidden=(64, 64), lr=3e-4, seed=0):
        net = Mlp([z_state_dim + z_action_dim, *hidden, 1], "tanh", init_seed=seed)
        return cls(net=net, opt=AdamState.for_params(net.n_params, lr=lr))

    def logits(self, zs, za) -> np.ndarray:
        x = np.concatenate([np.atleast_2d(zs), np.atleast_2d(za)], axis=1)
        return np.clip(self.net(x)[:, 0], -LOGIT_CLAMP, LOGIT_CLAMP)

    def prob(self, zs, za) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.logits(zs, za)))


def discriminator_loss(disc: Discriminator, expert: tuple, agent: tuple) -> float:
    """Cross-entropy of D on expert (label 1) and agent (label 0) pairs."""
    if len(np.atleast_2d(expert[0])) == 0 or len(np.atleast_2d(agent[0])) == 0:
        raise ValueError("discriminator loss needs non-empty expert and agent batches")
    expert_logits = disc.logits(*expert)
    agent_logits = disc.logits(*agent)
    # -log D = softplus(-logit), -log(1 - D) = softplus(logit)
    return float(np.mean(np.logaddexp(0.0, -expert_logits))
                 + np.mean(np.logaddexp(0.0, agent_logits)))


def discriminator_update(disc: Discriminator, expert: tuple, agent: tuple) -> float:
    """One optimizer step on the cross-entropy; returns the pre-update loss."""
    loss_before = discriminator_loss(disc, expert, agent)
    params = disc.net.param_tensor()
    e_in = np.concatenate([np.atleast_2d(expert[0]), np.atleast_2d(expert[1])], axis=1)
    a_in = np.concatenate([np.atleast_2d(agent[0]), np.atleast_2d(agent[1])], axis=1)
    e_logit = ad.clip(disc.net.forward_t(e_in, params)[:, 0], -LOGIT_CLAMP, LOGIT_CLAMP)
    a_logit = ad.clip(disc.net.forward_t(a_in, params)[:, 0], -LOGIT_CLAMP, LOGIT_CLAMP)
    loss = ad.tmean(ad.softplus(-1.0 * e_logit)) + ad.tmean(ad.softplus(a_logit))
    (grad,) = ad.gradient(loss, [params])
    disc.net.params = adam_step(disc.opt, disc.net.params, grad)
    return loss_before


def imitation_reward(disc: Discriminator, zs, za) -> np.ndarray:
    """r = -log(1 - D), clamped away from both saturation ends."""
    p = np.clip(disc.prob(zs, za), PROB_EPS, 1.0 - PROB_EPS)
    return -np.log(1.0 - p)


def imitation_reward_pair(disc: Discriminator, pair: LatentPair) -> float:
    return float(imitation_reward(disc, [pair.z_state], [pair.z_action])[0])


@dataclass
class GailConfig:
    iterations: int = 50
    disc_hidden: tuple = (64, 64)
    disc_lr: float = 3e-4
    disc_minibatch: int = 256


def run_ir_gail(
    target_config: RobotConfig,
    demos: DemoSet,
    latent_map,
    ppo_cfg: PpoConfig,
    gail_cfg: GailConfig,
    seed: int,
    *,
    dt: float = envs.DT,
    horizon: int = envs.HORIZON,
    reset_noise: float = envs.RESET_NOISE,
) -> tuple:
    """Adversarial imitation on the target robot; returns (policy, metrics).

    Each iteration samples an on-policy batch, encodes it next to the cached
    expert latents, takes one balanced discriminator epoch, relabels the
    batch with the imitation reward, and applies a PPO update. The true
    return is logged for evaluation only and never reaches the agent.
    """
    rng = np.random.default_rng(seed)
    expert_zs, expert_za = encode_demos(latent_map, demos)
    obs_dim = envs.obs_dim(target_config.family, target_config.obs_mode)
    act_dim = envs.action_dim(target_config.family)
    policy = Policy(obs_dim, act_dim, ppo_cfg, seed=seed)
    disc = Discriminator.create(
        latent_map.z_state_dim, latent_map.z_action_dim,
        hidden=gail_cfg.disc_hidden, lr=gail_cfg.disc_lr, seed=seed + 1,
    )
    metrics = []
    last_true_return = float("nan")
    for it in range(gail_cfg.iterations):
        rollout = collect_rollout(
            policy, target_config, ppo_cfg.steps_per_iteration,
            int(seed * 100003 + it), dt=dt, horizon=horizon, reset_noise=reset_noise,
        )
        agent_zs = latent_map.state_latents(rollout.obs, target_config.params)
        agent_za = latent_map.action_latents(rollout.actions, target_config.params)

        # one balanced epoch over the agent batch
        order = rng.permutation(len(rollout))
        disc_losses = []
        mb = gail_cfg.disc_minibatch
        for start in range(0, len(rollout), mb):
            idx = order[start : start + mb]
            e_idx = rng.integers(0, len(expert_zs), size=len(idx))
            disc_losses.append(
                discriminator_update(
                    disc,
                    (expert_zs[e_idx], expert_za[e_idx]),
                    (agent_zs[idx], agent_za[idx]),
                )
            )

        rewards = imitation_reward(disc, agent_zs, agent_za)
        ppo_update(policy, rollout, seed=int(seed * 99991 + it), rewards=rewards)

        if rollout.episode_returns:
            last_true_return = float(np.mean(rollout.episode_returns))
        metrics.append(
            {
                "iteration": it,
                "disc_loss": float(np.mean(disc_losses)),
                "mean_imitation_reward": float(np.mean(rewards)),
                "true_return": last_true_return,
            }
        )
    return policy, metrics
