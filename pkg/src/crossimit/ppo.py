"""Proximal policy optimization with generalized advantage estimation.

The stochastic policy is a diagonal Gaussian over [-1, 1]^k actions whose
mean and log-std both come from the actor network; raw samples are clipped
before they reach the environment while log-probabilities are taken at the
raw sample. Used both to train true-reward experts and, with relabeled
imitation rewards, inside the adversarial imitation loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import envs
from .envs import RobotConfig
from .nets import (
    AdamState,
    DiagGaussian,
    Mlp,
    adam_step,
    gaussian_entropy_t,
    gaussian_head,
    gaussian_log_prob_t,
    kl_between,
)


@dataclass
class PpoConfig:
    discount: float = 0.99
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    epochs: int = 10
    minibatch_size: int = 256
    steps_per_iteration: int = 2048
    entropy_coef: float = 1e-3
    value_coef: float = 0.5
    learning_rate: float = 3e-4
    kl_limit: float = 0.05
    hidden: tuple = (64, 64)

    def __post_init__(self):
        if not (0.0 <= self.discount <= 1.0 and 0.0 <= self.gae_lambda <= 1.0):
            raise ValueError("discount and gae_lambda must lie in [0, 1]")
        if self.clip_ratio <= 0.0:
            raise ValueError("clip_ratio must be positive")


class Policy:
    """Gaussian actor and scalar critic over raw observations."""

    def __init__(self, obs_dim: int, act_dim: int, cfg: PpoConfig, seed: int = 0):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.cfg = cfg
        self.actor = Mlp([obs_dim, *cfg.hidden, 2 * act_dim], "tanh", init_seed=seed * 7 + 1)
        self.actor.scale_output_layer(0.01)
        self.critic = Mlp([obs_dim, *cfg.hidden, 1], "tanh", init_seed=seed * 7 + 2)
        self.actor_opt = AdamState.for_params(self.actor.n_params, lr=cfg.learning_rate)
        self.critic_opt = AdamState.for_params(self.critic.n_params, lr=cfg.learning_rate)

    def distribution(self, obs) -> DiagGaussian:
        out = np.atleast_2d(self.actor(obs))
        mean, log_std = out[:, : self.act_dim], out[:, self.act_dim :]
        if np.asarray(obs).ndim == 1:
            mean, log_std = mean[0], log_std[0]
        return DiagGaussian(mean, log_std)

    def act(self, obs, rng: np.random.Generator) -> np.ndarray:
        """Sample a clipped action (the shared collection protocol)."""
        return np.clip(self.distribution(obs).sample(rng), -1.0, 1.0)

    def mean_action(self, obs) -> np.ndarray:
        return np.clip(self.distribution(obs).mean, -1.0, 1.0)

    def value(self, obs) -> float:
        return float(self.critic(obs)[..., 0])

    def snapshot(self) -> tuple:
        return self.actor.params.copy(), self.critic.params.copy()

    def restore(self, snap: tuple) -> None:
        self.actor.params, self.critic.params = snap[0].copy(), snap[1].copy()


@dataclass
class Rollout:
    """One on-policy batch plus bookkeeping for GAE and diagnostics."""

    obs: np.ndarray
    raw_actions: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    dist_means: np.ndarray
    dist_log_stds: np.ndarray
    last_value: float
    episode_returns: list = field(default_factory=list)

    def __len__(self):
        return len(self.rewards)


def collect_rollout(
    policy: Policy,
    config: RobotConfig,
    n_steps: int,
    seed: int,
    *,
    dt: float = envs.DT,
    horizon: int = envs.HORIZON,
    reset_noise: float = envs.RESET_NOISE,
) -> Rollout:
    """Gather ``n_steps`` environment steps, restarting episodes as they end."""
    rng = np.random.default_rng(seed)
    obs_buf = np.empty((n_steps, policy.obs_dim))
    raw_buf = np.empty((n_steps, policy.act_dim))
    act_buf = np.empty((n_steps, policy.act_dim))
    logp_buf = np.empty(n_steps)
    val_buf = np.empty(n_steps)
    rew_buf = np.empty(n_steps)
    done_buf = np.zeros(n_steps, dtype=bool)
    mean_buf = np.empty((n_steps, policy.act_dim))
    lstd_buf = np.empty((n_steps, policy.act_dim))
    episode_returns = []

    episode = 0
    state = envs.reset(config, int(rng.integers(2**31)), noise=reset_noise)
    ep_return = 0.0
    for t in range(n_steps):
        obs = envs.observe(config, state)
        dist = policy.distribution(obs)
        raw = dist.sample(rng)
        action = np.clip(raw, -1.0, 1.0)
        state, reward, done = envs.step(config, state, action, dt=dt, horizon=horizon)
        obs_buf[t] = obs
        raw_buf[t] = raw
        act_buf[t] = action
        logp_buf[t] = dist.log_prob(raw)
        val_buf[t] = policy.value(obs)
        rew_buf[t] = reward
        done_buf[t] = done
        mean_buf[t] = dist.mean
        lstd_buf[t] = dist.log_std
        ep_return += reward
        if done:
            episode_returns.append(ep_return)
            ep_return = 0.0
            episode += 1
            state = envs.reset(config, int(rng.integers(2**31)), noise=reset_noise)
    last_value = 0.0 if done_buf[-1] else policy.value(envs.observe(config, state))
    return Rollout(obs_buf, raw_buf, act_buf, logp_buf, val_buf, rew_buf, done_buf,
                   mean_buf, lstd_buf, last_value, episode_returns)


def gae_advantages(rewards, values, dones, discount, gae_lambda, last_value=0.0):
    """Standard GAE recursion; returns (advantages, returns).

    The bootstrap value is zero across ``done`` boundaries and ``last_value``
    after the final step (for truncated episodes).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    if not (len(rewards) == len(values) == len(dones)):
        raise ValueError("rewards, values, and dones must have equal lengths")
    n = len(rewards)
    advantages = np.zeros(n)
    gae = 0.0
    next_value = last_value
    for t in range(n - 1, -1, -1):
        not_done = 0.0 if dones[t] else 1.0
        delta = rewards[t] + discount * next_value * not_done - values[t]
        gae = delta + discount * gae_lambda * not_done * gae
        advantages[t] = gae
        next_value = values[t]
    return advantages, advantages + values


def ppo_update(policy: Policy, rollout: Rollout, seed: int, rewards=None) -> dict:
    """Clipped-surrogate update with value loss, entropy bonus, and a KL stop.

    Restores the pre-update parameters and aborts if a minibatch loss goes
    non-finite.
    """
    cfg = policy.cfg
    rewards = rollout.rewards if rewards is None else np.asarray(rewards, dtype=np.float64)
    advantages, returns = gae_advantages(
        rewards, rollout.values, rollout.dones, cfg.discount, cfg.gae_lambda,
        last_value=rollout.last_value,
    )
    adv_std = advantages.std()
    advantages = (advantages - advantages.mean()) / (adv_std if adv_std > 1e-8 else 1.0)

    snap = policy.snapshot()
    rng = np.random.default_rng(seed)
    n = len(rollout)
    old_dist = DiagGaussian(rollout.dist_means, rollout.dist_log_stds)
    stats = {"epochs": 0, "kl": 0.0, "aborted": False}

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            idx = order[start : start + cfg.minibatch_size]
            actor_params = policy.actor.param_tensor()
            critic_params = policy.critic.param_tensor()
            out = policy.actor.forward_t(rollout.obs[idx], actor_params)
            mean, log_std = gaussian_head(out, policy.act_dim)
            logp = gaussian_log_prob_t(mean, log_std, rollout.raw_actions[idx])
            ratio = ad.exp(logp - ad.constant(rollout.log_probs[idx]))
            adv = ad.constant(advantages[idx])
            clipped = ad.clip(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio)
            surrogate = ad.tmean(ad.minimum(ratio * adv, clipped * adv))
            entropy = ad.tmean(gaussian_entropy_t(log_std))
            value = policy.critic.forward_t(rollout.obs[idx], critic_params)[:, 0]
            value_loss = ad.tmean(ad.square(value - ad.constant(returns[idx])))
            loss = (-1.0 * surrogate) + (-cfg.entropy_coef) * entropy \
                + cfg.value_coef * value_loss
            if not np.isfinite(loss.data):
                policy.restore(snap)
                stats["aborted"] = True
                return stats
            actor_grad, critic_grad = ad.gradient(loss, [actor_params, critic_params])
            policy.actor.params = adam_step(policy.actor_opt, policy.actor.params, actor_grad)
            policy.critic.params = adam_step(policy.critic_opt, policy.critic.params, critic_grad)
        stats["epochs"] = epoch + 1
        new_dist = policy.distribution(rollout.obs)
        stats["kl"] = float(np.mean(kl_between(old_dist, new_dist)))
        if stats["kl"] > cfg.kl_limit:
            break
    return stats


class ExpertTrainingError(RuntimeError):
    """Raised when an expert fails to hit its return target within budget."""


def train_expert(
    config: RobotConfig,
    cfg: PpoConfig,
    seed: int,
    *,
    iterations: int = 120,
    target_return: float | None = None,
    dt: float = envs.DT,
    horizon: int = envs.HORIZON,
    reset_noise: float = envs.RESET_NOISE,
) -> tuple:
    """PPO on the true reward; returns (policy, history of mean returns).

    Stops early once the rolling mean return reaches ``target_return``; raises
    ExpertTrainingError if the budget runs out first while a target is set.
    """
    obs_dim = envs.obs_dim(config.family, config.obs_mode)
    act_dim = envs.action_dim(config.family)
    policy = Policy(obs_dim, act_dim, cfg, seed=seed)
    history = []
    reached = target_return is None
    hits = 0
    for it in range(iterations):
        rollout = collect_rollout(
            policy, config, cfg.steps_per_iteration, int(seed * 100003 + it),
            dt=dt, horizon=horizon, reset_noise=reset_noise,
        )
        mean_return = float(np.mean(rollout.episode_returns)) if rollout.episode_returns else float("nan")
        history.append({"iteration": it, "mean_return": mean_return})
        if target_return is not None and np.isfinite(mean_return) and mean_return >= target_return:
            # stop only on two consecutive hits, so one lucky batch of
            # episodes cannot freeze a still-shaky policy
            hits += 1
            if hits >= 2:
                reached = True
                break
        else:
            hits = 0
        ppo_update(policy, rollout, seed=int(seed * 99991 + it))
    if not reached:
        raise ExpertTrainingError(
            f"expert on {config.family.value} params={config.params} reached "
            f"{history[-1]['mean_return']:.1f} after {iterations} iterations, "
            f"target was {target_return:.1f}"
        )
    return policy, history
