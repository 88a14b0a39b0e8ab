"""Trajectory records, collection drivers, and JSONL persistence."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import envs
from .envs import EnvState, Family, ObsMode, RobotConfig

SCHEMA_VERSION = 1
STD_FLOOR = 1e-6


@dataclass(frozen=True)
class Step:
    """One transition at rest: (s_t, a_t, s_{t+1}, r_t, done_t)."""

    obs: tuple
    action: tuple
    next_obs: tuple
    reward: float
    done: bool


@dataclass
class TrajectoryRecord:
    """One episode of a single robot, plus its return and collection seed."""

    config: RobotConfig
    steps: list
    episode_return: float
    seed: int

    def __len__(self):
        return len(self.steps)

    def validate_chaining(self) -> None:
        for t in range(len(self.steps) - 1):
            if self.steps[t].next_obs != self.steps[t + 1].obs:
                raise ValueError(f"broken observation chain at step {t}")


@dataclass
class DemoSet:
    """Expert demonstrations grouped with their source configurations."""

    records: list
    source_configs: list = field(default_factory=list)

    def __post_init__(self):
        if not self.source_configs:
            seen = []
            for rec in self.records:
                if rec.config not in seen:
                    seen.append(rec.config)
            self.source_configs = seen

    def __len__(self):
        return len(self.records)


class RandomPolicy:
    """Uniform actions on [-1, 1]^k."""

    def __init__(self, k: int):
        self.k = k

    def act(self, obs, rng: np.random.Generator):
        return rng.uniform(-1.0, 1.0, size=self.k)


def episode_seed(seed: int, episode: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(episode,)).generate_state(1)[0])


def collect(
    policy,
    config: RobotConfig,
    episodes: int,
    seed: int,
    *,
    dt: float = envs.DT,
    horizon: int = envs.HORIZON,
    reset_noise: float = envs.RESET_NOISE,
    deterministic: bool = False,
) -> list:
    """Roll out a policy (or RandomPolicy) for a number of episodes.

    Deterministic per seed: episode seeds are derived from the base seed, and
    the action stream uses a generator seeded the same way.
    """
    records = []
    for ep in range(episodes):
        ep_seed = episode_seed(seed, ep)
        rng = np.random.default_rng(ep_seed)
        state = envs.reset(config, ep_seed, noise=reset_noise)
        steps = []
        total = 0.0
        done = False
        while not done:
            obs = envs.observe(config, state)
            if deterministic:
                action = policy.mean_action(obs)
            else:
                action = policy.act(obs, rng)
            action = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
            state, reward, done = envs.step(config, state, action, dt=dt, horizon=horizon)
            next_obs = envs.observe(config, state)
            steps.append(
                Step(tuple(obs), tuple(action), tuple(next_obs), float(reward), bool(done))
            )
            total += reward
        records.append(TrajectoryRecord(config, steps, total, ep_seed))
    return records


# persistence -----------------------------------------------------------------


def _config_to_json(config: RobotConfig) -> dict:
    return {
        "family": config.family.value,
        "params": list(config.params),
        "obs_mode": config.obs_mode.value,
    }


def _config_from_json(d: dict) -> RobotConfig:
    return RobotConfig(Family(d["family"]), tuple(d["params"]), ObsMode(d["obs_mode"]))


def save(records: list, path) -> None:
    """Write records as line-delimited JSON with a header line.

    The header carries the schema version, family, obs_mode, the common robot
    configuration (null when records span several robots), and the episode
    count used to detect truncation on load.
    """
    path = Path(path)
    families = {rec.config.family for rec in records}
    modes = {rec.config.obs_mode for rec in records}
    if len(families) > 1 or len(modes) > 1:
        raise ValueError("records must share one family and obs_mode per file")
    configs = {rec.config for rec in records}
    header = {
        "schema_version": SCHEMA_VERSION,
        "kind": "trajectories",
        "family": next(iter(families)).value if families else None,
        "obs_mode": next(iter(modes)).value if modes else None,
        "config": _config_to_json(next(iter(configs))) if len(configs) == 1 else None,
        "episodes": len(records),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for rec in records:
            line = {
                "config": _config_to_json(rec.config),
                "seed": rec.seed,
                "return": rec.episode_return,
                "steps": [
                    [list(s.obs), list(s.action), list(s.next_obs), s.reward, s.done]
                    for s in rec.steps
                ],
            }
            fh.write(json.dumps(line, sort_keys=True) + "\n")


def load(path) -> list:
    """Inverse of :func:`save`; bit-exact for 64-bit float payloads."""
    path = Path(path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file, expected a header line")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as err:
        raise ValueError(f"{path}: line 1: malformed header ({err})") from err
    if header.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(
            f"{path}: unsupported schema version {header.get('schema_version')!r}"
        )
    expected = header.get("episodes")
    records = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            d = json.loads(raw)
            rec = TrajectoryRecord(
                config=_config_from_json(d["config"]),
                steps=[
                    Step(tuple(o), tuple(a), tuple(n), float(r), bool(done))
                    for o, a, n, r, done in d["steps"]
                ],
                episode_return=float(d["return"]),
                seed=int(d["seed"]),
            )
            rec.validate_chaining()
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
            raise ValueError(
                f"{path}: line {lineno}: malformed episode ({err}); "
                f"last good line was {lineno - 1}"
            ) from err
        records.append(rec)
    if expected is not None and len(records) != expected:
        raise ValueError(
            f"{path}: truncated file: header announces {expected} episodes, "
            f"found {len(records)}; last good line was {len(records) + 1}"
        )
    return records


# statistics --------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetStats:
    obs_mean: np.ndarray
    obs_std: np.ndarray
    action_mean: np.ndarray
    action_std: np.ndarray
    n_steps: int
    n_episodes: int


def dataset_stats(records: list) -> DatasetStats:
    """Per-channel mean/std over all steps, with a floor on the std."""
    if not records:
        raise ValueError("dataset_stats requires at least one record")
    obs = np.asarray([s.obs for rec in records for s in rec.steps])
    act = np.asarray([s.action for rec in records for s in rec.steps])
    return DatasetStats(
        obs_mean=obs.mean(axis=0),
        obs_std=np.maximum(obs.std(axis=0), STD_FLOOR),
        action_mean=act.mean(axis=0),
        action_std=np.maximum(act.std(axis=0), STD_FLOOR),
        n_steps=int(obs.shape[0]),
        n_episodes=len(records),
    )
