"""Figure rendering for the report paths; saved next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

# dropping volatile metadata keeps re-rendered figures byte-identical
_SAVE_KW = {"dpi": 120, "metadata": {"Software": None}}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_imitation_metrics(metrics: list, path) -> None:
    """True return, discriminator loss, and imitation reward per iteration."""
    it = [m["iteration"] for m in metrics]
    fig, axes = plt.subplots(3, 1, figsize=(6, 7), sharex=True)
    axes[0].plot(it, [m["true_return"] for m in metrics], color="tab:blue")
    axes[0].set_ylabel("true return")
    axes[1].plot(it, [m["disc_loss"] for m in metrics], color="tab:orange")
    axes[1].axhline(2.0 * np.log(2.0), ls="--", lw=0.8, color="gray")
    axes[1].set_ylabel("disc loss")
    axes[2].plot(it, [m["mean_imitation_reward"] for m in metrics], color="tab:green")
    axes[2].set_ylabel("imitation reward")
    axes[2].set_xlabel("iteration")
    _save(fig, path)


def plot_repr_losses(history: list, path) -> None:
    steps = [h["step"] for h in history]
    fig, axes = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    for key in ("total", "state_recon", "action_recon", "dynamics"):
        axes[0].plot(steps, [h[key] for h in history], label=key)
    axes[0].set_yscale("log")
    axes[0].set_ylabel("loss")
    axes[0].legend(fontsize=8)
    for key in ("mi_state", "mi_action", "disentangle"):
        axes[1].plot(steps, [h[key] for h in history], label=key)
    axes[1].set_ylabel("MI estimate")
    axes[1].set_xlabel("step")
    axes[1].legend(fontsize=8)
    _save(fig, path)


def plot_expert_history(history: list, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot([h["iteration"] for h in history], [h["mean_return"] for h in history])
    ax.set_xlabel("iteration")
    ax.set_ylabel("mean true return")
    _save(fig, path)


def plot_table(reports: list, path) -> None:
    """Grouped bars of mean normalized return with a std whisker per cell."""
    modes = sorted({r.mode for r in reports})
    algorithms = sorted({r.algorithm for r in reports})
    width = 0.8 / max(len(algorithms), 1)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for k, algorithm in enumerate(algorithms):
        xs, means, stds = [], [], []
        for i, mode in enumerate(modes):
            rep = next((r for r in reports if r.mode == mode and r.algorithm == algorithm), None)
            if rep is None or not rep.per_target:
                continue
            xs.append(i + k * width)
            means.append(rep.mean)
            stds.append(rep.std)
        ax.bar(xs, means, width=width, yerr=stds, capsize=3, label=algorithm)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(modes))])
    ax.set_xticklabels(modes)
    ax.set_ylabel("normalized return")
    ax.axhline(1.0, ls="--", lw=0.8, color="gray")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_coupling(groups: list, angle_of, path) -> None:
    """Recovered angles of coupled states per anchor; aligned groups stack up."""
    fig, ax = plt.subplots(figsize=(6.5, 3.5))
    for group in groups:
        for config, obs, _ in group.members:
            ax.scatter(group.anchor_id, angle_of(obs), s=14,
                       color=plt.cm.viridis((hash(config.params) % 97) / 97.0))
    ax.set_xlabel("anchor group")
    ax.set_ylabel("recovered angle [rad]")
    _save(fig, path)
