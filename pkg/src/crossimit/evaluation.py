"""Evaluation protocol: splits, normalized returns, ablation, state coupling."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import envs
from .envs import BallRegion, ConfigSpace, Family, ObsMode, RobotConfig
from .trajectories import RandomPolicy, collect


def normalized_return(raw: float, expert_ref: float, random_ref: float) -> float:
    """(raw - random) / (expert - random); 1 at expert level, 0 at random level."""
    if not expert_ref > random_ref:
        raise ValueError(
            f"degenerate task: expert reference {expert_ref} must exceed "
            f"random reference {random_ref}"
        )
    return (raw - random_ref) / (expert_ref - random_ref)


def make_splits(
    space: ConfigSpace,
    ball: BallRegion,
    n_int: int,
    n_ext: int,
    seed: int,
    family: Family,
    obs_mode: ObsMode,
) -> tuple:
    """Interpolation targets inside the ball, extrapolation targets outside."""
    if not space.contains(ball.center):
        raise ValueError("ball center must lie inside the configuration space")
    interp = [
        envs.sample_config(space, family, obs_mode, region=ball, seed=seed * 1009 + i)
        for i in range(n_int)
    ]
    extrap = [
        envs.sample_config(space, family, obs_mode, exclude=ball, seed=seed * 2003 + i)
        for i in range(n_ext)
    ]
    return interp, extrap


def evaluate_policy(
    policy,
    config: RobotConfig,
    episodes: int,
    seed: int,
    *,
    dt: float = envs.DT,
    horizon: int = envs.HORIZON,
    reset_noise: float = envs.RESET_NOISE,
) -> float:
    """Average true return of a policy over freshly seeded episodes."""
    records = collect(policy, config, episodes, seed, dt=dt, horizon=horizon,
                      reset_noise=reset_noise)
    return float(np.mean([rec.episode_return for rec in records]))


def random_reference(config: RobotConfig, episodes: int, seed: int, **env_kw) -> float:
    policy = RandomPolicy(envs.action_dim(config.family))
    return evaluate_policy(policy, config, episodes, seed, **env_kw)


@dataclass
class EvalReport:
    """Normalized-return summary of one algorithm in one evaluation mode."""

    mode: str  # "interpolation" or "extrapolation"
    algorithm: str  # "gail", "ir-gail", or "ir-gail-nodyn"
    per_target: dict = field(default_factory=dict)  # params tuple -> list over seeds
    failures: dict = field(default_factory=dict)  # params tuple -> error string

    @property
    def values(self) -> list:
        return [v for returns in self.per_target.values() for v in returns]

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        return float(np.std(self.values))


def run_table(imitate_fn, reference_fn, algorithms, splits, seeds) -> list:
    """Normalized returns for every (algorithm, mode, target, seed) cell.

    ``imitate_fn(algorithm, target, seed) -> raw return`` trains and scores
    one policy; ``reference_fn(target) -> (expert_ref, random_ref)`` supplies
    the per-target normalizers. Pure given deterministic callables. A failing
    sub-run marks its target row invalid instead of aborting the table.
    """
    interp, extrap = splits
    reports = []
    for algorithm in algorithms:
        for mode, targets in (("interpolation", interp), ("extrapolation", extrap)):
            report = EvalReport(mode=mode, algorithm=algorithm)
            for target in targets:
                try:
                    expert_ref, random_ref = reference_fn(target)
                    returns = []
                    for seed in seeds:
                        raw = imitate_fn(algorithm, target, seed)
                        returns.append(normalized_return(raw, expert_ref, random_ref))
                except (RuntimeError, FloatingPointError, ValueError) as err:
                    report.failures[target.params] = str(err)
                    warnings.warn(
                        f"{algorithm}/{mode} target {target.params} failed: {err}")
                    continue
                report.per_target[target.params] = returns
            reports.append(report)
    return reports


def run_ablation(imitate_fn, reference_fn, splits, seeds, mode="extrapolation") -> tuple:
    """IR-GAIL with and without the latent dynamics term, same protocol."""
    interp, extrap = splits
    targets = interp if mode == "interpolation" else extrap
    reports = run_table(
        imitate_fn, reference_fn, ["ir-gail", "ir-gail-nodyn"],
        (targets, []) if mode == "interpolation" else ([], targets), seeds,
    )
    with_dyn = next(r for r in reports if r.algorithm == "ir-gail" and r.mode == mode)
    without = next(r for r in reports if r.algorithm == "ir-gail-nodyn" and r.mode == mode)
    return with_dyn, without


# state coupling -----------------------------------------------------------------


@dataclass
class CouplingGroup:
    """A latent anchor and, per robot, that robot's nearest encoded state."""

    anchor_id: int
    anchor_z: np.ndarray
    members: list  # (RobotConfig, observation ndarray, latent distance)


def couple_states(module, rollouts_per_robot: dict, n_anchors: int, seed: int) -> list:
    """Nearest-neighbor groups around latent anchors sampled from the pool.

    ``rollouts_per_robot`` maps RobotConfig -> list of TrajectoryRecord; robots
    with empty rollouts are skipped with a warning.
    """
    robots = []
    for config, records in rollouts_per_robot.items():
        obs = np.asarray([s.obs for rec in records for s in rec.steps])
        if len(obs) == 0:
            warnings.warn(f"skipping robot {config.params}: empty rollout")
            continue
        z = np.atleast_2d(module.encode_state(obs, config.params).mean)
        robots.append((config, obs, z))
    if len(robots) < 2:
        raise ValueError("state coupling needs at least two robots with rollouts")

    pool = np.concatenate([z for _, _, z in robots])
    rng = np.random.default_rng(seed)
    anchor_idx = rng.choice(len(pool), size=min(n_anchors, len(pool)), replace=False)
    groups = []
    for gid, ai in enumerate(anchor_idx):
        anchor = pool[ai]
        members = []
        for config, obs, z in robots:
            d = np.linalg.norm(z - anchor, axis=1)
            j = int(np.argmin(d))
            members.append((config, obs[j], float(d[j])))
        groups.append(CouplingGroup(anchor_id=gid, anchor_z=anchor, members=members))
    return groups


def pendulum_angle(obs, obs_mode: ObsMode) -> float:
    """Recover the tilt angle from either observation mode."""
    obs = np.asarray(obs, dtype=np.float64)
    if ObsMode(obs_mode) is ObsMode.ANGLE:
        return float(obs[0])
    return math.atan2(obs[0], obs[1])


def group_angle_discrepancy(groups: list, obs_mode: ObsMode) -> float:
    """Mean pairwise |angle difference| within coupling groups (pendulums)."""
    total, count = 0.0, 0
    for group in groups:
        angles = [pendulum_angle(obs, obs_mode) for _, obs, _ in group.members]
        for i in range(len(angles)):
            for j in range(i + 1, len(angles)):
                total += abs(angles[i] - angles[j])
                count += 1
    return total / count if count else 0.0


def random_grouping_discrepancy(rollouts_per_robot: dict, n_groups: int, seed: int,
                                obs_mode: ObsMode) -> float:
    """Baseline: groups formed by uniform random states, one per robot."""
    per_robot = []
    for config, records in rollouts_per_robot.items():
        obs = [s.obs for rec in records for s in rec.steps]
        if obs:
            per_robot.append(obs)
    rng = np.random.default_rng(seed)
    total, count = 0.0, 0
    for _ in range(n_groups):
        angles = [
            pendulum_angle(obs_list[rng.integers(len(obs_list))], obs_mode)
            for obs_list in per_robot
        ]
        for i in range(len(angles)):
            for j in range(i + 1, len(angles)):
                total += abs(angles[i] - angles[j])
                count += 1
    return total / count if count else 0.0


# delimited output ------------------------------------------------------------------


def write_table_csv(reports: list, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode", "algorithm", "target_params", "seed_index",
                         "normalized_return", "mean", "std"])
        for report in reports:
            for params, returns in report.per_target.items():
                for i, value in enumerate(returns):
                    writer.writerow([
                        report.mode, report.algorithm,
                        " ".join(repr(p) for p in params), i, repr(value),
                        repr(report.mean), repr(report.std),
                    ])


def write_coupling_csv(groups: list, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["anchor_id", "config_params", "observation", "latent_distance"])
        for group in groups:
            for config, obs, dist in group.members:
                writer.writerow([
                    group.anchor_id,
                    " ".join(repr(p) for p in config.params),
                    " ".join(repr(float(x)) for x in obs),
                    repr(dist),
                ])
