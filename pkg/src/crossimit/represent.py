"""Invariant state/action representation learning.

Two conditional variational encoders map (observation, config) and (action,
config) to diagonal Gaussians over small latent spaces; conditional decoders
reconstruct their inputs; a latent dynamics model predicts the next state
latent; and two adversarially trained witnesses estimate how much mutual
information the latents still carry about the robot configuration. The
encoders minimize

    L = L_sr + L_ar + l_dis * (I_s + I_a) + l_dyn * L_dyn + l_kl * L_kl

while the witnesses are updated once after every encoder step to track the
moving latent distribution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import envs
from .envs import ConfigSpace, Family, ObsMode, RobotConfig
from .mine import MineNetwork, dv_lower_bound, make_mi_batch, mine_update
from .nets import (
    AdamState,
    DiagGaussian,
    Mlp,
    adam_step,
    gaussian_head,
    gaussian_kl_to_prior_t,
    mlp_from_blob,
    mlp_to_blob,
    reparam_t,
)
from .trajectories import RandomPolicy, collect

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Transition:
    """One (s_t, a_t, s_{t+1}) sample tagged with its robot's parameters."""

    obs: tuple
    action: tuple
    next_obs: tuple
    config_params: tuple


@dataclass(frozen=True)
class LossWeights:
    """Weights of the disentangle, dynamics, and prior-KL terms."""

    disentangle: float = 0.1
    dynamics: float = 1.0
    prior_kl: float = 1e-3

    def __post_init__(self):
        if min(self.disentangle, self.dynamics, self.prior_kl) < 0.0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True)
class LatentPair:
    """Invariant state/action representation of one transition."""

    z_state: tuple
    z_action: tuple


@dataclass
class ReprSettings:
    z_state_dim: int = 8
    z_action_dim: int = 4
    hidden: tuple = (64, 64)
    batch_size: int = 256
    steps: int = 20000
    learning_rate: float = 3e-4
    mine_learning_rate: float = 3e-4
    weights: LossWeights = field(default_factory=LossWeights)
    include_demos: bool = True
    seed: int = 0


class RepresentationModule:
    """Encoders, decoders, latent dynamics, and MI witnesses for one family."""

    def __init__(self, family, obs_mode, config_space: ConfigSpace,
                 obs_mean, obs_std, settings: ReprSettings):
        self.family = Family(family)
        self.obs_mode = ObsMode(obs_mode)
        self.config_space = config_space
        self.obs_mean = np.asarray(obs_mean, dtype=np.float64)
        self.obs_std = np.asarray(obs_std, dtype=np.float64)
        self.settings = settings

        self.obs_dim = envs.obs_dim(self.family, self.obs_mode)
        self.act_dim = envs.action_dim(self.family)
        self.config_dim = config_space.dim
        zs, za, hidden = settings.z_state_dim, settings.z_action_dim, settings.hidden
        seed = settings.seed

        def mlp(widths, offset):
            return Mlp(widths, "tanh", init_seed=seed * 1000 + offset)

        self.state_encoder = mlp([self.obs_dim + self.config_dim, *hidden, 2 * zs], 1)
        self.action_encoder = mlp([self.act_dim + self.config_dim, *hidden, 2 * za], 2)
        self.state_decoder = mlp([zs + self.config_dim, *hidden, self.obs_dim], 3)
        self.action_decoder = mlp([za + self.config_dim, *hidden, self.act_dim], 4)
        self.dynamics = mlp([zs + za, *hidden, zs], 5)
        self.t_state = MineNetwork.create(
            zs, self.config_dim, target="state", hidden=hidden,
            lr=settings.mine_learning_rate, seed=seed * 1000 + 6)
        self.t_action = MineNetwork.create(
            za, self.config_dim, target="action", hidden=hidden,
            lr=settings.mine_learning_rate, seed=seed * 1000 + 7)

        lr = settings.learning_rate
        self.optimizers = {
            name: AdamState.for_params(net.n_params, lr=lr)
            for name, net in self.trainable_nets().items()
        }

    def trainable_nets(self) -> dict:
        return {
            "state_encoder": self.state_encoder,
            "action_encoder": self.action_encoder,
            "state_decoder": self.state_decoder,
            "action_decoder": self.action_decoder,
            "dynamics": self.dynamics,
        }

    # preprocessing -------------------------------------------------------
    def whiten_obs(self, obs) -> np.ndarray:
        return (np.asarray(obs, dtype=np.float64) - self.obs_mean) / self.obs_std

    def normalize_config(self, params) -> np.ndarray:
        """Affine map of the configuration box onto [-1, 1]^d."""
        lo = np.asarray(self.config_space.lower)
        hi = np.asarray(self.config_space.upper)
        span = np.where(hi > lo, hi - lo, 1.0)
        return 2.0 * (np.asarray(params, dtype=np.float64) - lo) / span - 1.0

    def _state_input(self, obs, params) -> np.ndarray:
        obs = np.atleast_2d(self.whiten_obs(obs))
        c = np.atleast_2d(self.normalize_config(params))
        if c.shape[0] == 1 and obs.shape[0] > 1:
            c = np.repeat(c, obs.shape[0], axis=0)
        return np.concatenate([obs, c], axis=1)

    def _action_input(self, action, params) -> np.ndarray:
        action = np.atleast_2d(np.asarray(action, dtype=np.float64))
        c = np.atleast_2d(self.normalize_config(params))
        if c.shape[0] == 1 and action.shape[0] > 1:
            c = np.repeat(c, action.shape[0], axis=0)
        return np.concatenate([action, c], axis=1)

    # numeric encoding ------------------------------------------------------
    def encode_state(self, obs, params) -> DiagGaussian:
        out = self.state_encoder(self._state_input(obs, params))
        zs = self.settings.z_state_dim
        out = np.atleast_2d(out)
        mean, log_std = out[:, :zs], out[:, zs:]
        if mean.shape[0] == 1:
            mean, log_std = mean[0], log_std[0]
        return DiagGaussian(mean, log_std)

    def encode_action(self, action, params) -> DiagGaussian:
        out = np.atleast_2d(self.action_encoder(self._action_input(action, params)))
        za = self.settings.z_action_dim
        mean, log_std = out[:, :za], out[:, za:]
        if mean.shape[0] == 1:
            mean, log_std = mean[0], log_std[0]
        return DiagGaussian(mean, log_std)


# loss terms ---------------------------------------------------------------


def _squared_error_rows(pred: ad.Tensor, target: np.ndarray) -> ad.Tensor:
    return ad.tsum(ad.square(pred - ad.constant(target)), axis=1)


def _dv_bound_t(net: Mlp, params: ad.Tensor, z: ad.Tensor, c_joint: np.ndarray,
                perm: np.ndarray) -> ad.Tensor:
    """DV bound as a graph node; gradients flow into the latents only via z."""
    joint_in = ad.concat([z, ad.constant(c_joint)], axis=1)
    marg_in = ad.concat([z, ad.constant(c_joint[perm])], axis=1)
    t_joint = net.forward_t(joint_in, params)
    t_marg = net.forward_t(marg_in, params)
    shift = float(np.max(t_marg.data))
    log_partition = ad.log(ad.tmean(ad.exp(t_marg - shift))) + shift
    return ad.tmean(t_joint) - log_partition


@dataclass
class LossParts:
    state_recon: float
    action_recon: float
    disentangle: float
    dynamics: float
    prior_kl: float


def total_loss(parts: LossParts, weights: LossWeights) -> float:
    """Weighted combination of the loss terms."""
    for name, value in asdict(parts).items():
        if not np.isfinite(value):
            raise FloatingPointError(f"non-finite loss term {name}")
    return (
        parts.state_recon
        + parts.action_recon
        + weights.disentangle * parts.disentangle
        + weights.dynamics * parts.dynamics
        + weights.prior_kl * parts.prior_kl
    )


def _batch_arrays(transitions: list) -> tuple:
    S = np.asarray([t.obs for t in transitions])
    A = np.asarray([t.action for t in transitions])
    S2 = np.asarray([t.next_obs for t in transitions])
    C = np.asarray([t.config_params for t in transitions])
    return S, A, S2, C


def _loss_graph(module: RepresentationModule, S, A, S2, C, noise, weights: LossWeights,
                perm: np.ndarray, param_tensors: dict) -> dict:
    """Build the full training loss; returns the component tensors."""
    zs = module.settings.z_state_dim
    za = module.settings.z_action_dim
    s_in = module._state_input(S, C)
    a_in = module._action_input(A, C)
    c_norm = np.atleast_2d(module.normalize_config(C))

    mean_s, log_std_s = gaussian_head(
        module.state_encoder.forward_t(s_in, param_tensors["state_encoder"]), zs)
    mean_a, log_std_a = gaussian_head(
        module.action_encoder.forward_t(a_in, param_tensors["action_encoder"]), za)
    z_s = reparam_t(mean_s, log_std_s, noise["state"])
    z_a = reparam_t(mean_a, log_std_a, noise["action"])

    s_hat = module.state_decoder.forward_t(
        ad.concat([z_s, ad.constant(c_norm)], axis=1), param_tensors["state_decoder"])
    a_hat = module.action_decoder.forward_t(
        ad.concat([z_a, ad.constant(c_norm)], axis=1), param_tensors["action_decoder"])

    parts = {
        "state_recon": ad.tmean(_squared_error_rows(s_hat, module.whiten_obs(S))),
        "action_recon": ad.tmean(_squared_error_rows(a_hat, np.asarray(A, dtype=np.float64))),
        "prior_kl": ad.tmean(gaussian_kl_to_prior_t(mean_s, log_std_s))
        + ad.tmean(gaussian_kl_to_prior_t(mean_a, log_std_a)),
    }

    if weights.dynamics > 0.0:
        s2_in = module._state_input(S2, C)
        mean_s2, log_std_s2 = gaussian_head(
            module.state_encoder.forward_t(s2_in, param_tensors["state_encoder"]), zs)
        z_s2 = reparam_t(mean_s2, log_std_s2, noise["next_state"])
        z_pred = module.dynamics.forward_t(
            ad.concat([z_s, z_a], axis=1), param_tensors["dynamics"])
        parts["dynamics"] = ad.tmean(ad.tsum(ad.square(z_pred - z_s2), axis=1))

    if weights.disentangle > 0.0:
        parts["disentangle"] = _dv_bound_t(
            module.t_state.net, ad.constant(module.t_state.net.params), z_s, c_norm, perm
        ) + _dv_bound_t(
            module.t_action.net, ad.constant(module.t_action.net.params), z_a, c_norm, perm
        )

    total = parts["state_recon"] + parts["action_recon"] + weights.prior_kl * parts["prior_kl"]
    if "dynamics" in parts:
        total = total + weights.dynamics * parts["dynamics"]
    if "disentangle" in parts:
        total = total + weights.disentangle * parts["disentangle"]
    parts["total"] = total
    parts["z_state"] = z_s
    parts["z_action"] = z_a
    return parts


# public loss operations (numeric views used by tests and probes) -------------


def reconstruction_losses(module: RepresentationModule, transitions: list,
                          rng: np.random.Generator) -> tuple:
    S, A, _, C = _batch_arrays(transitions)
    noise = {
        "state": rng.standard_normal((len(S), module.settings.z_state_dim)),
        "action": rng.standard_normal((len(S), module.settings.z_action_dim)),
    }
    params = {name: net.param_tensor() for name, net in module.trainable_nets().items()}
    parts = _loss_graph(module, S, A, S, C, {**noise, "next_state": noise["state"]},
                        LossWeights(0.0, 0.0, 0.0), np.arange(len(S)), params)
    return float(parts["state_recon"].data), float(parts["action_recon"].data)


def prior_kl_loss(state_dist: DiagGaussian, action_dist: DiagGaussian) -> float:
    """Closed-form KL of both encoder outputs to the standard normal prior."""
    return float(np.mean(state_dist.kl_to_standard_normal())
                 + np.mean(action_dist.kl_to_standard_normal()))


def dynamics_loss(dynamics: Mlp, z_state, z_action, z_next_state) -> float:
    z_in = np.concatenate([np.atleast_2d(z_state), np.atleast_2d(z_action)], axis=1)
    pred = np.atleast_2d(dynamics(z_in))
    target = np.atleast_2d(np.asarray(z_next_state, dtype=np.float64))
    return float(np.mean(np.sum((pred - target) ** 2, axis=1)))


# dataset construction ---------------------------------------------------------


def build_repr_dataset(
    family,
    obs_mode,
    robot_configs: list,
    steps_per_robot: int,
    seed: int,
    *,
    expert_demos=None,
    dt: float = envs.DT,
    horizon: int = envs.HORIZON,
    reset_noise: float = envs.RESET_NOISE,
) -> list:
    """Random-policy transitions on the given robots, plus optional demos.

    Episodes are restarted until each robot contributes exactly
    ``steps_per_robot`` transitions.
    """
    if not robot_configs:
        raise ValueError("need at least one robot configuration")
    transitions = []
    policy = RandomPolicy(envs.action_dim(family))
    for i, config in enumerate(robot_configs):
        robot_seed = int(np.random.SeedSequence(entropy=seed, spawn_key=(i,)).generate_state(1)[0])
        count, episode = 0, 0
        while count < steps_per_robot:
            recs = collect(policy, config, 1, int(robot_seed + episode),
                           dt=dt, horizon=horizon, reset_noise=reset_noise)
            for s in recs[0].steps:
                if count >= steps_per_robot:
                    break
                transitions.append(Transition(s.obs, s.action, s.next_obs, config.params))
                count += 1
            episode += 1
    if expert_demos is not None:
        for rec in expert_demos.records:
            for s in rec.steps:
                transitions.append(Transition(s.obs, s.action, s.next_obs, rec.config.params))
    return transitions


def transition_stats(transitions: list) -> tuple:
    """Observation whitening statistics over s_t and s_{t+1} jointly."""
    obs = np.asarray([t.obs for t in transitions] + [t.next_obs for t in transitions])
    return obs.mean(axis=0), np.maximum(obs.std(axis=0), 1e-6)


# training ---------------------------------------------------------------------


def train_representation(module: RepresentationModule, transitions: list,
                         *, steps=None, log_every=50) -> list:
    """Alternating optimization of the encoders and the MI witnesses.

    Returns the loss history: one dict per logged step with every term and the
    current witness bounds.
    """
    if not transitions:
        raise ValueError("empty representation dataset")
    settings = module.settings
    weights = settings.weights
    steps = settings.steps if steps is None else steps
    rng = np.random.default_rng(settings.seed)
    S, A, S2, C = _batch_arrays(transitions)
    n = len(transitions)
    history = []

    for step_idx in range(steps):
        idx = rng.integers(0, n, size=min(settings.batch_size, n))
        batch = (S[idx], A[idx], S2[idx], C[idx])
        noise = {
            "state": rng.standard_normal((len(idx), settings.z_state_dim)),
            "action": rng.standard_normal((len(idx), settings.z_action_dim)),
            "next_state": rng.standard_normal((len(idx), settings.z_state_dim)),
        }
        perm = rng.permutation(len(idx))
        param_tensors = {name: net.param_tensor() for name, net in module.trainable_nets().items()}
        parts = _loss_graph(module, *batch, noise, weights, perm, param_tensors)
        total = parts["total"]
        if not np.isfinite(total.data):
            bad = [k for k, v in parts.items()
                   if k not in ("z_state", "z_action") and not np.all(np.isfinite(v.data))]
            raise FloatingPointError(f"non-finite representation loss in term(s): {bad}")
        grads = ad.gradient(total, [param_tensors[name] for name in module.trainable_nets()])
        for (name, net), grad in zip(module.trainable_nets().items(), grads):
            if name == "dynamics" and weights.dynamics == 0.0:
                continue
            net.params = adam_step(module.optimizers[name], net.params, grad)

        # witness updates track the new encoder outputs
        z_s = parts["z_state"].data
        z_a = parts["z_action"].data
        c_norm = np.atleast_2d(module.normalize_config(batch[3]))
        mi_s = mine_update(module.t_state, make_mi_batch(z_s, c_norm, rng))
        mi_a = mine_update(module.t_action, make_mi_batch(z_a, c_norm, rng))

        if step_idx % log_every == 0 or step_idx == steps - 1:
            row = {
                "step": step_idx,
                "total": float(total.data),
                "state_recon": float(parts["state_recon"].data),
                "action_recon": float(parts["action_recon"].data),
                "prior_kl": float(parts["prior_kl"].data),
                "dynamics": float(parts["dynamics"].data) if "dynamics" in parts else 0.0,
                "disentangle": float(parts["disentangle"].data) if "disentangle" in parts else 0.0,
                "mi_state": mi_s,
                "mi_action": mi_a,
            }
            history.append(row)
    return history


def probe_state_mi(module: RepresentationModule, transitions: list, *, steps=1500,
                   batch_size=256, lr=1e-3, seed=0) -> float:
    """Train a fresh witness on held-out data and report I(z_state, config).

    The probe is independent of the adversarial witnesses used in training,
    and is scored on a half of the data it never saw, so memorization cannot
    inflate the estimate.
    """
    rng = np.random.default_rng(seed)
    S, _, _, C = _batch_arrays(transitions)
    z = np.atleast_2d(module.encode_state(S, C).mean)
    c_norm = np.atleast_2d(module.normalize_config(C))
    split = rng.permutation(len(z))
    half = len(z) // 2
    train_idx, eval_idx = split[:half], split[half:]
    probe = MineNetwork.create(z.shape[1], c_norm.shape[1], target="state",
                               lr=lr, seed=seed + 1)
    for _ in range(steps):
        idx = train_idx[rng.integers(0, len(train_idx), size=min(batch_size, len(train_idx)))]
        mine_update(probe, make_mi_batch(z[idx], c_norm[idx], rng))
    z_eval, c_eval = z[eval_idx], c_norm[eval_idx]
    estimates = [
        dv_lower_bound(probe, make_mi_batch(z_eval, c_eval, rng)) for _ in range(8)
    ]
    return float(np.mean(estimates))


# persistence --------------------------------------------------------------------


def save_repr(module: RepresentationModule, path) -> None:
    blob = {
        "format_version": CHECKPOINT_VERSION,
        "family": module.family.value,
        "obs_mode": module.obs_mode.value,
        "config_space": {"lower": list(module.config_space.lower),
                         "upper": list(module.config_space.upper)},
        "obs_mean": module.obs_mean.tolist(),
        "obs_std": module.obs_std.tolist(),
        "settings": {
            "z_state_dim": module.settings.z_state_dim,
            "z_action_dim": module.settings.z_action_dim,
            "hidden": list(module.settings.hidden),
            "batch_size": module.settings.batch_size,
            "steps": module.settings.steps,
            "learning_rate": module.settings.learning_rate,
            "mine_learning_rate": module.settings.mine_learning_rate,
            "weights": asdict(module.settings.weights),
            "include_demos": module.settings.include_demos,
            "seed": module.settings.seed,
        },
        "networks": {name: mlp_to_blob(net) for name, net in module.trainable_nets().items()},
        "witnesses": {
            "state": mlp_to_blob(module.t_state.net),
            "action": mlp_to_blob(module.t_action.net),
        },
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(blob, sort_keys=True))


def load_repr(path) -> RepresentationModule:
    blob = json.loads(Path(path).read_text())
    if blob.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {blob.get('format_version')!r}")
    s = blob["settings"]
    settings = ReprSettings(
        z_state_dim=s["z_state_dim"],
        z_action_dim=s["z_action_dim"],
        hidden=tuple(s["hidden"]),
        batch_size=s["batch_size"],
        steps=s["steps"],
        learning_rate=s["learning_rate"],
        mine_learning_rate=s["mine_learning_rate"],
        weights=LossWeights(**s["weights"]),
        include_demos=s["include_demos"],
        seed=s["seed"],
    )
    space = ConfigSpace(tuple(blob["config_space"]["lower"]), tuple(blob["config_space"]["upper"]))
    module = RepresentationModule(
        blob["family"], blob["obs_mode"], space, blob["obs_mean"], blob["obs_std"], settings
    )
    for name in module.trainable_nets():
        net = mlp_from_blob(blob["networks"][name])
        setattr(module, name, net)
    module.t_state.net = mlp_from_blob(blob["witnesses"]["state"])
    module.t_action.net = mlp_from_blob(blob["witnesses"]["action"])
    return module
