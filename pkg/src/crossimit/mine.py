"""Donsker-Varadhan mutual-information lower bounds with neural witnesses.

The witness network T maps a (variable, configuration) pair to a scalar; the
bound is  mean_joint T  -  log mean_marginal e^T,  with marginal pairs formed
by shuffling configurations within the batch. Training uses the standard
exponential-moving-average correction of the partition term so the gradient
of the log is not biased by small batches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .nets import AdamState, Mlp, adam_step

EMA_DECAY = 0.99
MIN_BATCH = 16


@dataclass
class MineNetwork:
    """Witness network plus its optimizer and partition-term running mean."""

    net: Mlp
    target: str  # "state" or "action" latent
    opt: AdamState
    ema_partition: float | None = None
    ema_decay: float = EMA_DECAY

    @classmethod
    def create(cls, variable_dim, config_dim, *, target="state", hidden=(64, 64),
               lr=3e-4, seed=0) -> "MineNetwork":
        net = Mlp([variable_dim + config_dim, *hidden, 1], "relu", init_seed=seed)
        return cls(net=net, target=target, opt=AdamState.for_params(net.n_params, lr=lr))


@dataclass
class MiBatch:
    """Joint samples and a config-shuffled marginal copy of the same batch."""

    joint_x: np.ndarray
    joint_c: np.ndarray
    marginal_x: np.ndarray
    marginal_c: np.ndarray

    def __post_init__(self):
        for name in ("joint_x", "joint_c", "marginal_x", "marginal_c"):
            setattr(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=np.float64)))
        n = self.joint_x.shape[0]
        if n < MIN_BATCH:
            raise ValueError(f"MI batches need at least {MIN_BATCH} pairs, got {n}")
        if not (self.joint_c.shape[0] == self.marginal_x.shape[0] == self.marginal_c.shape[0] == n):
            raise ValueError("joint and marginal parts must have equal lengths")
        joint_sorted = self.joint_c[np.lexsort(self.joint_c.T[::-1])]
        marg_sorted = self.marginal_c[np.lexsort(self.marginal_c.T[::-1])]
        if not np.array_equal(joint_sorted, marg_sorted):
            raise ValueError("marginal configs must be a permutation of joint configs")

    def __len__(self):
        return self.joint_x.shape[0]


def make_mi_batch(latents, configs, rng: np.random.Generator) -> MiBatch:
    """Pair latents with within-batch shuffled configs for the marginal term."""
    latents = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    configs = np.atleast_2d(np.asarray(configs, dtype=np.float64))
    perm = rng.permutation(latents.shape[0])
    return MiBatch(latents, configs, latents, configs[perm])


def _log_mean_exp(values: np.ndarray) -> float:
    m = float(np.max(values))
    return m + float(np.log(np.mean(np.exp(values - m))))


def dv_lower_bound(t: MineNetwork, batch: MiBatch) -> float:
    """Donsker-Varadhan estimate of I(variable, config) on one batch."""
    if len(batch) == 0:
        raise ValueError("empty MI batch")
    t_joint = t.net(np.concatenate([batch.joint_x, batch.joint_c], axis=1))[:, 0]
    t_marg = t.net(np.concatenate([batch.marginal_x, batch.marginal_c], axis=1))[:, 0]
    return float(np.mean(t_joint)) - _log_mean_exp(t_marg)


def mine_update(t: MineNetwork, batch: MiBatch) -> float:
    """One gradient ascent step on the bound; returns the pre-update estimate.

    The gradient of the log-partition term uses mean(e^T)/ema as a surrogate,
    which has the same expectation but does not bias small-batch gradients.
    """
    bound = dv_lower_bound(t, batch)

    params = t.net.param_tensor()
    t_joint = t.net.forward_t(np.concatenate([batch.joint_x, batch.joint_c], axis=1), params)
    t_marg = t.net.forward_t(np.concatenate([batch.marginal_x, batch.marginal_c], axis=1), params)

    shift = float(np.max(t_marg.data))
    mean_exp_shifted = ad.tmean(ad.exp(t_marg - shift))
    mean_exp = float(mean_exp_shifted.data) * float(np.exp(shift))
    if t.ema_partition is None:
        t.ema_partition = mean_exp
    else:
        t.ema_partition = t.ema_decay * t.ema_partition + (1.0 - t.ema_decay) * mean_exp

    # d/dtheta [mean(e^T) / ema] with the ema held constant
    factor = float(np.exp(shift)) / t.ema_partition
    loss = -(ad.tmean(t_joint) - mean_exp_shifted * factor)
    (grad,) = ad.gradient(loss, [params])
    t.net.params = adam_step(t.opt, t.net.params, grad)
    return bound
