"""Experiment configuration file, derived seeding, and stage manifests."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .envs import BallRegion, ConfigSpace, Family, ObsMode
from .gail import GailConfig
from .ppo import PpoConfig
from .represent import LossWeights, ReprSettings

CONFIG_SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"


class MissingArtifactError(RuntimeError):
    """An upstream pipeline stage has not produced its artifact yet."""

    def __init__(self, artifact: str, stage: str):
        super().__init__(f"missing artifact {artifact!r}: run the `{stage}` stage first")
        self.stage = stage


class NumericalFailure(RuntimeError):
    """Training diverged or produced non-finite values."""


def derive_seed(root: int, *tags) -> int:
    """Stable child seed from a root seed and a path of string/int tags."""
    digest = hashlib.sha256(
        json.dumps([int(root), *[str(t) for t in tags]]).encode()
    ).digest()
    return int.from_bytes(digest[:4], "big")


@dataclass
class EnvSettings:
    dt: float = 0.02
    horizon: int = 200
    reset_noise: float = 0.05


@dataclass
class DemoSettings:
    experts: int = 4
    trajectories: int = 32


@dataclass
class CollectSettings:
    robots: int = 16
    steps_per_robot: int = 200


@dataclass
class ExpertSettings:
    iterations: int = 120
    target_return_fraction: float = 0.95


@dataclass
class EvalSettings:
    interpolation_targets: int = 4
    extrapolation_targets: int = 4
    seeds: int = 3
    episodes: int = 10
    anchors: int = 24
    coupling_rollout_episodes: int = 4
    reference_episodes: int = 20


@dataclass
class ExperimentConfig:
    family: Family
    obs_mode: ObsMode
    config_space: ConfigSpace
    ball: BallRegion
    seed: int
    output_dir: Path
    env: EnvSettings = field(default_factory=EnvSettings)
    demos: DemoSettings = field(default_factory=DemoSettings)
    collect: CollectSettings = field(default_factory=CollectSettings)
    representation: ReprSettings = field(default_factory=ReprSettings)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    expert: ExpertSettings = field(default_factory=ExpertSettings)
    gail: GailConfig = field(default_factory=GailConfig)
    evaluation: EvalSettings = field(default_factory=EvalSettings)

    def __post_init__(self):
        if not self.config_space.contains(self.ball.center):
            raise ValueError("ball center must lie inside the configuration space")
        for name, value in (("experts", self.demos.experts),
                            ("trajectories", self.demos.trajectories),
                            ("robots", self.collect.robots)):
            if value < 1:
                raise ValueError(f"demos/collect count {name} must be >= 1")

    def env_kwargs(self) -> dict:
        return {
            "dt": self.env.dt,
            "horizon": self.env.horizon,
            "reset_noise": self.env.reset_noise,
        }

    def to_dict(self) -> dict:
        return {
            "schema_version": CONFIG_SCHEMA_VERSION,
            "family": self.family.value,
            "obs_mode": self.obs_mode.value,
            "seed": self.seed,
            "output_dir": str(self.output_dir),
            "config_space": {"lower": list(self.config_space.lower),
                             "upper": list(self.config_space.upper)},
            "ball": {"center": list(self.ball.center), "radius": self.ball.radius},
            "env": {"dt": self.env.dt, "horizon": self.env.horizon,
                    "reset_noise": self.env.reset_noise},
            "demos": {"experts": self.demos.experts,
                      "trajectories": self.demos.trajectories},
            "collect": {"robots": self.collect.robots,
                        "steps_per_robot": self.collect.steps_per_robot},
            "representation": {
                "z_state_dim": self.representation.z_state_dim,
                "z_action_dim": self.representation.z_action_dim,
                "hidden": list(self.representation.hidden),
                "batch_size": self.representation.batch_size,
                "steps": self.representation.steps,
                "learning_rate": self.representation.learning_rate,
                "mine_learning_rate": self.representation.mine_learning_rate,
                "lambda_disentangle": self.representation.weights.disentangle,
                "lambda_dynamics": self.representation.weights.dynamics,
                "lambda_prior": self.representation.weights.prior_kl,
                "include_demos": self.representation.include_demos,
            },
            "ppo": {
                "discount": self.ppo.discount,
                "gae_lambda": self.ppo.gae_lambda,
                "clip_ratio": self.ppo.clip_ratio,
                "epochs": self.ppo.epochs,
                "minibatch_size": self.ppo.minibatch_size,
                "steps_per_iteration": self.ppo.steps_per_iteration,
                "entropy_coef": self.ppo.entropy_coef,
                "value_coef": self.ppo.value_coef,
                "learning_rate": self.ppo.learning_rate,
                "kl_limit": self.ppo.kl_limit,
                "hidden": list(self.ppo.hidden),
            },
            "expert": {"iterations": self.expert.iterations,
                       "target_return_fraction": self.expert.target_return_fraction},
            "imitation": {"iterations": self.gail.iterations,
                          "discriminator_hidden": list(self.gail.disc_hidden),
                          "discriminator_lr": self.gail.disc_lr,
                          "discriminator_minibatch": self.gail.disc_minibatch},
            "evaluation": {
                "interpolation_targets": self.evaluation.interpolation_targets,
                "extrapolation_targets": self.evaluation.extrapolation_targets,
                "seeds": self.evaluation.seeds,
                "episodes": self.evaluation.episodes,
                "anchors": self.evaluation.anchors,
                "coupling_rollout_episodes": self.evaluation.coupling_rollout_episodes,
                "reference_episodes": self.evaluation.reference_episodes,
            },
        }

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")  # relocating outputs must not change provenance
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def _section(data: dict, name: str) -> dict:
    value = data.get(name, {})
    if not isinstance(value, dict):
        raise ValueError(f"config section {name!r} must be a mapping")
    return value


def config_from_dict(data: dict) -> ExperimentConfig:
    version = data.get("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise ValueError(f"unsupported config schema version {version!r}")
    for key in ("family", "obs_mode", "config_space", "ball", "output_dir"):
        if key not in data:
            raise ValueError(f"config is missing required key {key!r}")
    space = ConfigSpace(tuple(data["config_space"]["lower"]),
                        tuple(data["config_space"]["upper"]))
    ball = BallRegion(tuple(data["ball"]["center"]), float(data["ball"]["radius"]))
    env = _section(data, "env")
    demos = _section(data, "demos")
    coll = _section(data, "collect")
    rep = _section(data, "representation")
    ppo = _section(data, "ppo")
    expert = _section(data, "expert")
    imit = _section(data, "imitation")
    ev = _section(data, "evaluation")
    seed = int(data.get("seed", 0))

    repr_settings = ReprSettings(
        z_state_dim=int(rep.get("z_state_dim", 8)),
        z_action_dim=int(rep.get("z_action_dim", 4)),
        hidden=tuple(rep.get("hidden", (64, 64))),
        batch_size=int(rep.get("batch_size", 256)),
        steps=int(rep.get("steps", 20000)),
        learning_rate=float(rep.get("learning_rate", 3e-4)),
        mine_learning_rate=float(rep.get("mine_learning_rate", 3e-4)),
        weights=LossWeights(
            disentangle=float(rep.get("lambda_disentangle", 0.1)),
            dynamics=float(rep.get("lambda_dynamics", 1.0)),
            prior_kl=float(rep.get("lambda_prior", 1e-3)),
        ),
        include_demos=bool(rep.get("include_demos", True)),
        seed=derive_seed(seed, "representation"),
    )
    ppo_cfg = PpoConfig(
        discount=float(ppo.get("discount", 0.99)),
        gae_lambda=float(ppo.get("gae_lambda", 0.95)),
        clip_ratio=float(ppo.get("clip_ratio", 0.2)),
        epochs=int(ppo.get("epochs", 10)),
        minibatch_size=int(ppo.get("minibatch_size", 256)),
        steps_per_iteration=int(ppo.get("steps_per_iteration", 2048)),
        entropy_coef=float(ppo.get("entropy_coef", 1e-3)),
        value_coef=float(ppo.get("value_coef", 0.5)),
        learning_rate=float(ppo.get("learning_rate", 3e-4)),
        kl_limit=float(ppo.get("kl_limit", 0.05)),
        hidden=tuple(ppo.get("hidden", (64, 64))),
    )
    return ExperimentConfig(
        family=Family(data["family"]),
        obs_mode=ObsMode(data["obs_mode"]),
        config_space=space,
        ball=ball,
        seed=seed,
        output_dir=Path(data["output_dir"]),
        env=EnvSettings(
            dt=float(env.get("dt", 0.02)),
            horizon=int(env.get("horizon", 200)),
            reset_noise=float(env.get("reset_noise", 0.05)),
        ),
        demos=DemoSettings(
            experts=int(demos.get("experts", 4)),
            trajectories=int(demos.get("trajectories", 32)),
        ),
        collect=CollectSettings(
            robots=int(coll.get("robots", 16)),
            steps_per_robot=int(coll.get("steps_per_robot", 200)),
        ),
        representation=repr_settings,
        ppo=ppo_cfg,
        expert=ExpertSettings(
            iterations=int(expert.get("iterations", 120)),
            target_return_fraction=float(expert.get("target_return_fraction", 0.95)),
        ),
        gail=GailConfig(
            iterations=int(imit.get("iterations", 50)),
            disc_hidden=tuple(imit.get("discriminator_hidden", (64, 64))),
            disc_lr=float(imit.get("discriminator_lr", 3e-4)),
            disc_minibatch=int(imit.get("discriminator_minibatch", 256)),
        ),
        evaluation=EvalSettings(
            interpolation_targets=int(ev.get("interpolation_targets", 4)),
            extrapolation_targets=int(ev.get("extrapolation_targets", 4)),
            seeds=int(ev.get("seeds", 3)),
            episodes=int(ev.get("episodes", 10)),
            anchors=int(ev.get("anchors", 24)),
            coupling_rollout_episodes=int(ev.get("coupling_rollout_episodes", 4)),
            reference_episodes=int(ev.get("reference_episodes", 20)),
        ),
    )


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config file must contain a mapping")
    return config_from_dict(data)


# manifests ----------------------------------------------------------------------


def record_stage(output_dir, stage: str, config: ExperimentConfig,
                 seeds: dict, inputs: dict, outputs: dict) -> None:
    """Add or replace one stage entry in the run manifest."""
    path = Path(output_dir) / MANIFEST_NAME
    manifest = {"schema_version": 1, "stages": {}}
    if path.exists():
        manifest = json.loads(path.read_text())
    manifest["stages"][stage] = {
        "config_digest": config.digest(),
        "seeds": seeds,
        "inputs": inputs,
        "outputs": outputs,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, sort_keys=True, indent=1))


def read_manifest(output_dir) -> dict:
    path = Path(output_dir) / MANIFEST_NAME
    if not path.exists():
        return {"schema_version": 1, "stages": {}}
    return json.loads(path.read_text())


def require_artifact(path, stage: str):
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(str(path), stage)
    return path
