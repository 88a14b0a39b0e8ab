"""The five pipeline stages, each writing artifacts plus a manifest entry.

Artifacts under the output directory:

    experts/expert-<i>.json        trained demonstration experts
    demos.jsonl                    expert demonstrations (32 episodes from 4 robots)
    rollouts.jsonl                 random-policy rollouts on 16 training robots
    repr.json / repr-<variant>.json   representation checkpoints
    repr-losses[-<variant>].csv/.png  training curves
    policies/<run>.json            imitation policies
    metrics/<run>.csv/.png         per-iteration imitation metrics
    references/ref-<params>.json   per-target normalization references
    table.csv/.png  ablation.csv/.png  coupling.csv/.png
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import envs, evaluation, plotting
from .envs import RobotConfig
from .experiment import (
    ExperimentConfig,
    MissingArtifactError,
    NumericalFailure,
    derive_seed,
    record_stage,
    require_artifact,
)
from .gail import IdentityLatentMap, ReprLatentMap, run_ir_gail
from .nets import mlp_from_blob, mlp_to_blob
from .ppo import ExpertTrainingError, Policy, train_expert
from .represent import (
    RepresentationModule,
    ReprSettings,
    LossWeights,
    build_repr_dataset,
    load_repr,
    save_repr,
    train_representation,
    transition_stats,
)
from .trajectories import DemoSet, collect, load, save

ALGORITHMS = ("gail", "ir-gail", "ir-gail-nodyn")
REPR_VARIANTS = {"default": None, "nodyn": "dynamics", "nodisent": "disentangle"}


def _params_tag(params) -> str:
    return "_".join(f"{p:.4f}" for p in params)


def _rel(path, out: Path) -> str:
    """Manifest paths are relative to the output dir, for relocatability."""
    return str(Path(path).relative_to(out))


def save_policy(policy: Policy, path) -> None:
    blob = {
        "format_version": 1,
        "obs_dim": policy.obs_dim,
        "act_dim": policy.act_dim,
        "actor": mlp_to_blob(policy.actor),
        "critic": mlp_to_blob(policy.critic),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(blob, sort_keys=True))


def load_policy(path, ppo_cfg) -> Policy:
    blob = json.loads(Path(path).read_text())
    policy = Policy(blob["obs_dim"], blob["act_dim"], ppo_cfg)
    policy.actor = mlp_from_blob(blob["actor"])
    policy.critic = mlp_from_blob(blob["critic"])
    return policy


def write_metrics_csv(metrics: list, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "disc_loss", "mean_imitation_reward", "true_return"])
        for m in metrics:
            writer.writerow([m["iteration"], repr(m["disc_loss"]),
                             repr(m["mean_imitation_reward"]), repr(m["true_return"])])


def write_history_csv(history: list, path, columns) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in history:
            writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c]
                             for c in columns])


def expert_target_return(cfg: ExperimentConfig) -> float | None:
    """Return threshold for the balance tasks; the arm has no known ceiling."""
    if cfg.family in (envs.Family.PENDULUM, envs.Family.CARTPOLE):
        return cfg.expert.target_return_fraction * cfg.env.horizon
    return None


# stage 1 ------------------------------------------------------------------------


def stage_gen_experts(cfg: ExperimentConfig) -> dict:
    """Train demonstration experts inside the ball and collect their demos."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    per_expert = cfg.demos.trajectories // cfg.demos.experts
    if per_expert * cfg.demos.experts != cfg.demos.trajectories:
        raise ValueError("trajectories must divide evenly among experts")
    target = expert_target_return(cfg)
    records = []
    expert_paths = []
    for i in range(cfg.demos.experts):
        config = envs.sample_config(
            cfg.config_space, cfg.family, cfg.obs_mode,
            region=cfg.ball, seed=derive_seed(cfg.seed, "expert-config", i),
        )
        try:
            policy, history = train_expert(
                config, cfg.ppo, derive_seed(cfg.seed, "expert", i),
                iterations=cfg.expert.iterations, target_return=target,
                **cfg.env_kwargs(),
            )
        except ExpertTrainingError as err:
            raise NumericalFailure(str(err)) from err
        path = out / "experts" / f"expert-{i}.json"
        save_policy(policy, path)
        expert_paths.append(_rel(path, out))
        plotting.plot_expert_history(history, out / "experts" / f"expert-{i}.png")
        records.extend(
            collect(policy, config, per_expert,
                    derive_seed(cfg.seed, "demo", i), **cfg.env_kwargs())
        )
    demos_path = out / "demos.jsonl"
    save(records, demos_path)
    record_stage(out, "gen-experts", cfg,
                 seeds={"root": cfg.seed},
                 inputs={},
                 outputs={"demos": _rel(demos_path, out), "experts": expert_paths})
    return {"demos": demos_path, "experts": expert_paths}


# stage 2 ------------------------------------------------------------------------


def stage_collect(cfg: ExperimentConfig) -> dict:
    """Random rollouts on training robots sampled inside the ball."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    from .trajectories import RandomPolicy

    policy = RandomPolicy(envs.action_dim(cfg.family))
    records = []
    for i in range(cfg.collect.robots):
        config = envs.sample_config(
            cfg.config_space, cfg.family, cfg.obs_mode,
            region=cfg.ball, seed=derive_seed(cfg.seed, "rollout-config", i),
        )
        count, episode = 0, 0
        while count < cfg.collect.steps_per_robot:
            recs = collect(policy, config, 1,
                           derive_seed(cfg.seed, "rollout", i, episode),
                           **cfg.env_kwargs())
            rec = recs[0]
            room = cfg.collect.steps_per_robot - count
            if len(rec) > room:
                rec.steps = rec.steps[:room]
                rec.episode_return = float(sum(s.reward for s in rec.steps))
            records.append(rec)
            count += len(rec)
            episode += 1
    rollouts_path = out / "rollouts.jsonl"
    save(records, rollouts_path)
    record_stage(out, "collect", cfg,
                 seeds={"root": cfg.seed},
                 inputs={},
                 outputs={"rollouts": _rel(rollouts_path, out)})
    return {"rollouts": rollouts_path}


# stage 3 ------------------------------------------------------------------------


def repr_checkpoint_path(out: Path, variant: str) -> Path:
    return out / ("repr.json" if variant == "default" else f"repr-{variant}.json")


def stage_train_repr(cfg: ExperimentConfig, variant: str = "default") -> dict:
    """Train the invariant representation from rollouts (and demos by default).

    Variants zero one loss weight: ``nodyn`` removes the latent dynamics term,
    ``nodisent`` the mutual-information term.
    """
    if variant not in REPR_VARIANTS:
        raise ValueError(f"unknown representation variant {variant!r}")
    out = Path(cfg.output_dir)
    rollouts_path = require_artifact(out / "rollouts.jsonl", "collect")
    rollouts = load(rollouts_path)
    demos = None
    inputs = {"rollouts": _rel(rollouts_path, out)}
    if cfg.representation.include_demos:
        demos_path = require_artifact(out / "demos.jsonl", "gen-experts")
        demos = DemoSet(load(demos_path))
        inputs["demos"] = _rel(demos_path, out)

    transitions = []
    from .represent import Transition

    for rec in rollouts:
        for s in rec.steps:
            transitions.append(Transition(s.obs, s.action, s.next_obs, rec.config.params))
    if demos is not None:
        for rec in demos.records:
            for s in rec.steps:
                transitions.append(Transition(s.obs, s.action, s.next_obs, rec.config.params))

    weights = cfg.representation.weights
    zeroed = REPR_VARIANTS[variant]
    if zeroed is not None:
        weights = LossWeights(**{**weights.__dict__, zeroed: 0.0})
    settings = ReprSettings(
        z_state_dim=cfg.representation.z_state_dim,
        z_action_dim=cfg.representation.z_action_dim,
        hidden=cfg.representation.hidden,
        batch_size=cfg.representation.batch_size,
        steps=cfg.representation.steps,
        learning_rate=cfg.representation.learning_rate,
        mine_learning_rate=cfg.representation.mine_learning_rate,
        weights=weights,
        include_demos=cfg.representation.include_demos,
        seed=derive_seed(cfg.seed, "repr", variant),
    )
    obs_mean, obs_std = transition_stats(transitions)
    module = RepresentationModule(cfg.family, cfg.obs_mode, cfg.config_space,
                                  obs_mean, obs_std, settings)
    try:
        history = train_representation(module, transitions)
    except FloatingPointError as err:
        raise NumericalFailure(str(err)) from err

    ckpt = repr_checkpoint_path(out, variant)
    save_repr(module, ckpt)
    suffix = "" if variant == "default" else f"-{variant}"
    losses_csv = out / f"repr-losses{suffix}.csv"
    write_history_csv(history, losses_csv,
                      ["step", "total", "state_recon", "action_recon", "prior_kl",
                       "dynamics", "disentangle", "mi_state", "mi_action"])
    plotting.plot_repr_losses(history, out / f"repr-losses{suffix}.png")
    record_stage(out, f"train-repr-{variant}" if variant != "default" else "train-repr",
                 cfg, seeds={"root": cfg.seed, "repr": settings.seed},
                 inputs=inputs,
                 outputs={"checkpoint": _rel(ckpt, out), "losses": _rel(losses_csv, out)})
    return {"checkpoint": ckpt, "losses": losses_csv, "module": module}


# stage 4 ------------------------------------------------------------------------


def latent_map_for(cfg: ExperimentConfig, algorithm: str, out: Path):
    if algorithm == "gail":
        return IdentityLatentMap(envs.obs_dim(cfg.family, cfg.obs_mode),
                                 envs.action_dim(cfg.family))
    variant = "default" if algorithm == "ir-gail" else "nodyn"
    ckpt = repr_checkpoint_path(out, variant)
    stage = "train-repr" if variant == "default" else "train-repr --variant nodyn"
    require_artifact(ckpt, stage)
    return ReprLatentMap(load_repr(ckpt))


def stage_imitate(cfg: ExperimentConfig, target: RobotConfig, algorithm: str,
                  seed_index: int = 0, run_tag: str | None = None) -> dict:
    """One adversarial imitation run of the given algorithm on a target robot."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    out = Path(cfg.output_dir)
    demos_path = require_artifact(out / "demos.jsonl", "gen-experts")
    demos = DemoSet(load(demos_path))
    latent_map = latent_map_for(cfg, algorithm, out)
    seed = derive_seed(cfg.seed, "imitate", algorithm, _params_tag(target.params), seed_index)
    policy, metrics = run_ir_gail(
        target, demos, latent_map, cfg.ppo, cfg.gail, seed, **cfg.env_kwargs()
    )
    tag = run_tag or f"{algorithm}-{_params_tag(target.params)}-s{seed_index}"
    policy_path = out / "policies" / f"{tag}.json"
    save_policy(policy, policy_path)
    metrics_csv = out / "metrics" / f"{tag}.csv"
    write_metrics_csv(metrics, metrics_csv)
    plotting.plot_imitation_metrics(metrics, out / "metrics" / f"{tag}.png")
    record_stage(out, f"imitate:{tag}", cfg,
                 seeds={"root": cfg.seed, "run": seed},
                 inputs={"demos": _rel(demos_path, out)},
                 outputs={"policy": _rel(policy_path, out), "metrics": _rel(metrics_csv, out)})
    return {"policy": policy, "policy_path": policy_path, "metrics": metrics,
            "metrics_csv": metrics_csv}


# stage 5 ------------------------------------------------------------------------


def _reference_pair(cfg: ExperimentConfig, target: RobotConfig, out: Path) -> tuple:
    """Per-target expert/random normalizers, cached on disk."""
    ref_dir = out / "references"
    ref_dir.mkdir(parents=True, exist_ok=True)
    path = ref_dir / f"ref-{_params_tag(target.params)}.json"
    if path.exists():
        blob = json.loads(path.read_text())
        return blob["expert_ref"], blob["random_ref"]
    target_return = expert_target_return(cfg)
    try:
        policy, _ = train_expert(
            target, cfg.ppo, derive_seed(cfg.seed, "reference", _params_tag(target.params)),
            iterations=cfg.expert.iterations, target_return=target_return,
            **cfg.env_kwargs(),
        )
    except ExpertTrainingError as err:
        raise NumericalFailure(str(err)) from err
    eval_seed = derive_seed(cfg.seed, "reference-eval", _params_tag(target.params))
    expert_ref = evaluation.evaluate_policy(
        policy, target, cfg.evaluation.reference_episodes, eval_seed, **cfg.env_kwargs())
    random_ref = evaluation.random_reference(
        target, cfg.evaluation.reference_episodes, eval_seed + 1, **cfg.env_kwargs())
    path.write_text(json.dumps(
        {"expert_ref": expert_ref, "random_ref": random_ref,
         "params": list(target.params)}, sort_keys=True))
    return expert_ref, random_ref


def _imitate_and_score(cfg: ExperimentConfig, algorithm: str, target: RobotConfig,
                       seed_index: int) -> float:
    out = Path(cfg.output_dir)
    result = stage_imitate(cfg, target, algorithm, seed_index)
    eval_seed = derive_seed(cfg.seed, "eval", algorithm, _params_tag(target.params), seed_index)
    return evaluation.evaluate_policy(
        result["policy"], target, cfg.evaluation.episodes, eval_seed, **cfg.env_kwargs())


def stage_evaluate(cfg: ExperimentConfig, *, table=True, ablation=True,
                   coupling=True, ablation_mode="interpolation",
                   algorithms=("gail", "ir-gail")) -> dict:
    """Interpolation/extrapolation table, dynamics ablation, and coupling CSVs."""
    out = Path(cfg.output_dir)
    require_artifact(out / "demos.jsonl", "gen-experts")
    if any(a.startswith("ir-gail") for a in algorithms) or ablation or coupling:
        require_artifact(repr_checkpoint_path(out, "default"), "train-repr")

    splits = evaluation.make_splits(
        cfg.config_space, cfg.ball,
        cfg.evaluation.interpolation_targets, cfg.evaluation.extrapolation_targets,
        derive_seed(cfg.seed, "splits"), cfg.family, cfg.obs_mode,
    )
    seeds = list(range(cfg.evaluation.seeds))
    reference_fn = lambda target: _reference_pair(cfg, target, out)
    score_cache = {}

    def imitate_fn(algorithm, target, s):
        key = (algorithm, target.params, s)
        if key not in score_cache:
            score_cache[key] = _imitate_and_score(cfg, algorithm, target, s)
        return score_cache[key]

    results = {"splits": splits}
    if table:
        reports = evaluation.run_table(imitate_fn, reference_fn, list(algorithms), splits, seeds)
        evaluation.write_table_csv(reports, out / "table.csv")
        plotting.plot_table(reports, out / "table.png")
        results["reports"] = reports
    if ablation:
        require_artifact(repr_checkpoint_path(out, "nodyn"), "train-repr --variant nodyn")
        with_dyn, without = evaluation.run_ablation(
            imitate_fn, reference_fn, splits, seeds, mode=ablation_mode)
        evaluation.write_table_csv([with_dyn, without], out / "ablation.csv")
        plotting.plot_table([with_dyn, without], out / "ablation.png")
        results["ablation"] = (with_dyn, without)
    if coupling:
        module = load_repr(repr_checkpoint_path(out, "default"))
        rollouts = _coupling_rollouts(cfg, out)
        groups = evaluation.couple_states(
            module, rollouts, cfg.evaluation.anchors, derive_seed(cfg.seed, "coupling"))
        evaluation.write_coupling_csv(groups, out / "coupling.csv")
        plotting.plot_coupling(
            groups, lambda obs: evaluation.pendulum_angle(obs, cfg.obs_mode),
            out / "coupling.png")
        results["coupling"] = groups
        results["coupling_rollouts"] = rollouts

    record_stage(out, "evaluate", cfg,
                 seeds={"root": cfg.seed},
                 inputs={"demos": "demos.jsonl"},
                 outputs={name: f"{name}.csv"
                          for name, on in (("table", table), ("ablation", ablation),
                                           ("coupling", coupling)) if on})
    return results


def _coupling_rollouts(cfg: ExperimentConfig, out: Path) -> dict:
    """Rollouts of the demonstration experts on their own robots."""
    manifest_path = out / "manifest.json"
    if not manifest_path.exists():
        raise MissingArtifactError(str(manifest_path), "gen-experts")
    manifest = json.loads(manifest_path.read_text())
    if "gen-experts" not in manifest.get("stages", {}):
        raise MissingArtifactError("experts", "gen-experts")
    expert_paths = manifest["stages"]["gen-experts"]["outputs"]["experts"]
    rollouts = {}
    for i, path in enumerate(expert_paths):
        path = out / path
        config = envs.sample_config(
            cfg.config_space, cfg.family, cfg.obs_mode,
            region=cfg.ball, seed=derive_seed(cfg.seed, "expert-config", i),
        )
        policy = load_policy(path, cfg.ppo)
        rollouts[config] = collect(
            policy, config, cfg.evaluation.coupling_rollout_episodes,
            derive_seed(cfg.seed, "coupling-rollout", i), **cfg.env_kwargs())
    return rollouts
