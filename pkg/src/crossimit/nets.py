"""MLPs over flat parameter vectors, diagonal Gaussians, and Adam.

Every network in the package is an :class:`Mlp`: a stack of affine layers with
tanh or relu on the hidden layers, parameterized by a single flat float64
vector. The flat layout keeps optimizers and checkpoints trivial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0

_ACTIVATIONS = ("tanh", "relu")


def _layer_shapes(widths):
    return [(widths[i], widths[i + 1]) for i in range(len(widths) - 1)]


def param_count(widths) -> int:
    return sum((w_in + 1) * w_out for w_in, w_out in _layer_shapes(widths))


class Mlp:
    """Fully connected network with parameters stored as one flat vector."""

    def __init__(self, widths, activation="tanh", params=None, init_seed=0):
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2 or any(w <= 0 for w in widths):
            raise ValueError(f"invalid layer widths {widths}")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.widths = widths
        self.activation = activation
        self.n_params = param_count(widths)
        if params is None:
            params = self._init_params(init_seed)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.n_params,):
            raise ValueError(
                f"expected {self.n_params} parameters for widths {widths}, got {params.shape}"
            )
        if not np.all(np.isfinite(params)):
            raise ValueError("non-finite parameters")
        self.params = params.copy()

    def _init_params(self, seed) -> np.ndarray:
        rng = np.random.default_rng(seed)
        chunks = []
        for w_in, w_out in _layer_shapes(self.widths):
            bound = math.sqrt(6.0 / (w_in + w_out))
            chunks.append(rng.uniform(-bound, bound, size=w_in * w_out))
            chunks.append(np.zeros(w_out))
        return np.concatenate(chunks)

    def scale_output_layer(self, factor: float) -> None:
        """Shrink the last affine layer in place (used for policy heads)."""
        w_in, w_out = _layer_shapes(self.widths)[-1]
        end = self.n_params
        self.params[end - (w_in + 1) * w_out : end - w_out] *= factor

    def _act(self, x: np.ndarray) -> np.ndarray:
        return np.tanh(x) if self.activation == "tanh" else np.maximum(x, 0.0)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Numeric forward pass; accepts a single input vector or a batch."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.widths[0]:
            raise ValueError(
                f"input width {x.shape[-1]} does not match first layer width {self.widths[0]}"
            )
        offset = 0
        n_layers = len(self.widths) - 1
        for i, (w_in, w_out) in enumerate(_layer_shapes(self.widths)):
            w = self.params[offset : offset + w_in * w_out].reshape(w_in, w_out)
            offset += w_in * w_out
            b = self.params[offset : offset + w_out]
            offset += w_out
            x = x @ w + b
            if i < n_layers - 1:
                x = self._act(x)
        return x

    __call__ = forward

    def param_tensor(self) -> ad.Tensor:
        return ad.Tensor(self.params)

    def forward_t(self, x, params: ad.Tensor) -> ad.Tensor:
        """Graph forward pass for a (batch, width) input."""
        if not isinstance(x, ad.Tensor):
            x = ad.constant(np.atleast_2d(x))
        if x.shape[-1] != self.widths[0]:
            raise ValueError(
                f"input width {x.shape[-1]} does not match first layer width {self.widths[0]}"
            )
        act = ad.tanh if self.activation == "tanh" else ad.relu
        offset = 0
        n_layers = len(self.widths) - 1
        for i, (w_in, w_out) in enumerate(_layer_shapes(self.widths)):
            w = params[offset : offset + w_in * w_out].reshape((w_in, w_out))
            offset += w_in * w_out
            b = params[offset : offset + w_out]
            offset += w_out
            x = x @ w + b
            if i < n_layers - 1:
                x = act(x)
        return x


# Adam -----------------------------------------------------------------------


@dataclass
class AdamState:
    """Per-network state of the adaptive-moment optimizer."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, n: int, lr: float = 3e-4) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), lr=lr)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """One bias-corrected Adam update; returns the new parameter vector."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape or grad.shape != state.m.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match parameters {params.shape}")
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient passed to optimizer")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


# diagonal Gaussians -----------------------------------------------------------


@dataclass
class DiagGaussian:
    """Diagonal Gaussian given by mean and clamped log standard deviation.

    Arrays may be single vectors or (batch, dim) stacks; reductions are over
    the last axis.
    """

    mean: np.ndarray
    log_std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.log_std = np.clip(
            np.asarray(self.log_std, dtype=np.float64), LOG_STD_MIN, LOG_STD_MAX
        )
        if self.mean.shape != self.log_std.shape:
            raise ValueError("mean and log_std must have equal shapes")

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return sample_reparam(self, rng.standard_normal(self.mean.shape))

    def log_prob(self, x: np.ndarray) -> np.ndarray:
        z = (np.asarray(x, dtype=np.float64) - self.mean) / self.std
        k = self.mean.shape[-1]
        return -0.5 * np.sum(z * z, axis=-1) - np.sum(self.log_std, axis=-1) \
            - 0.5 * k * math.log(2.0 * math.pi)

    def entropy(self) -> np.ndarray:
        k = self.mean.shape[-1]
        return np.sum(self.log_std, axis=-1) + 0.5 * k * (1.0 + math.log(2.0 * math.pi))

    def kl_to_standard_normal(self) -> np.ndarray:
        var = np.exp(2.0 * self.log_std)
        return 0.5 * np.sum(self.mean**2 + var - 1.0 - 2.0 * self.log_std, axis=-1)


def sample_reparam(g: DiagGaussian, noise: np.ndarray) -> np.ndarray:
    """mean + exp(log_std) * noise, with externally supplied noise."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != g.mean.shape:
        raise ValueError("noise shape must match mean shape")
    return g.mean + np.exp(g.log_std) * noise


def kl_between(p: DiagGaussian, q: DiagGaussian) -> np.ndarray:
    """KL(p || q) per batch row for diagonal Gaussians."""
    var_p = np.exp(2.0 * p.log_std)
    var_q = np.exp(2.0 * q.log_std)
    return np.sum(
        q.log_std - p.log_std + (var_p + (p.mean - q.mean) ** 2) / (2.0 * var_q) - 0.5,
        axis=-1,
    )


# graph-side Gaussian helpers ---------------------------------------------------


def gaussian_head(out: ad.Tensor, k: int):
    """Split a (batch, 2k) network output into (mean, clamped log_std)."""
    mean = out[:, :k]
    log_std = ad.clip(out[:, k:], LOG_STD_MIN, LOG_STD_MAX)
    return mean, log_std


def reparam_t(mean: ad.Tensor, log_std: ad.Tensor, noise: np.ndarray) -> ad.Tensor:
    return mean + ad.exp(log_std) * ad.constant(noise)


def gaussian_log_prob_t(mean: ad.Tensor, log_std: ad.Tensor, x: np.ndarray) -> ad.Tensor:
    """Row-wise log density of constant samples ``x`` under the graph Gaussian."""
    k = x.shape[-1]
    diff = (ad.constant(x) - mean) * ad.exp(-log_std)
    return (
        -0.5 * ad.tsum(ad.square(diff), axis=1)
        - ad.tsum(log_std, axis=1)
        + ad.constant(-0.5 * k * math.log(2.0 * math.pi))
    )


def gaussian_entropy_t(log_std: ad.Tensor) -> ad.Tensor:
    k = log_std.shape[-1]
    return ad.tsum(log_std, axis=1) + ad.constant(0.5 * k * (1.0 + math.log(2.0 * math.pi)))


def gaussian_kl_to_prior_t(mean: ad.Tensor, log_std: ad.Tensor) -> ad.Tensor:
    """Row-wise KL from the graph Gaussian to the standard normal prior."""
    var = ad.exp(log_std * 2.0)
    terms = ad.square(mean) + var - 1.0 + log_std * (-2.0)
    return 0.5 * ad.tsum(terms, axis=1)


# checkpoint blobs --------------------------------------------------------------

BLOB_VERSION = 1


def mlp_to_blob(mlp: Mlp) -> dict:
    return {
        "format_version": BLOB_VERSION,
        "widths": list(mlp.widths),
        "activation": mlp.activation,
        "params": mlp.params.tolist(),
    }


def mlp_from_blob(blob: dict) -> Mlp:
    if blob.get("format_version") != BLOB_VERSION:
        raise ValueError(f"unsupported network blob version {blob.get('format_version')!r}")
    return Mlp(blob["widths"], blob["activation"], params=np.asarray(blob["params"]))
