"""Config parsing, subcommand routing, exit codes, and manifest provenance."""

import json
from pathlib import Path

import pytest
import yaml

from crossimit import cli
from crossimit.experiment import config_from_dict, load_config

TINY_OVERRIDES = {
    "demos": {"experts": 2, "trajectories": 4},
    "collect": {"robots": 2, "steps_per_robot": 40},
    "representation": {"steps": 30, "batch_size": 64, "hidden": [16, 16]},
    "ppo": {"steps_per_iteration": 128, "epochs": 2, "minibatch_size": 64},
    "expert": {"iterations": 40},
    "imitation": {"iterations": 2, "discriminator_minibatch": 64},
    "evaluation": {"interpolation_targets": 1, "extrapolation_targets": 1,
                   "seeds": 1, "episodes": 2, "anchors": 4,
                   "coupling_rollout_episodes": 1, "reference_episodes": 2},
}


def tiny_config_dict(out_dir, seed=3):
    data = {
        "schema_version": 1,
        "family": "pendulum",
        "obs_mode": "keypoint",
        "seed": seed,
        "output_dir": str(out_dir),
        "config_space": {"lower": [0.75, 0.5], "upper": [2.5, 2.0]},
        "ball": {"center": [1.4, 1.2], "radius": 0.3},
    }
    data.update(TINY_OVERRIDES)
    return data


@pytest.fixture
def tiny_config_file(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump(tiny_config_dict(tmp_path / "out")))
    return path


class TestConfigLoading:
    def test_shipped_configs_parse(self):
        for name in ("pendulum-keypoint", "pendulum-angle", "arm-keypoint"):
            cfg = load_config(Path("configs") / f"{name}.yaml")
            assert cfg.demos.experts == 4
            assert cfg.demos.trajectories == 32
            assert cfg.collect.robots == 16

    def test_missing_key_rejected(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("family: pendulum\n")
        with pytest.raises(ValueError, match="missing required key"):
            load_config(path)

    def test_ball_outside_space_rejected(self, tmp_path):
        data = tiny_config_dict(tmp_path)
        data["ball"]["center"] = [99.0, 99.0]
        with pytest.raises(ValueError, match="ball center"):
            config_from_dict(data)

    def test_digest_stable_and_output_dir_independent(self, tmp_path):
        a = config_from_dict(tiny_config_dict(tmp_path / "a"))
        b = config_from_dict(tiny_config_dict(tmp_path / "b"))
        assert a.digest() == b.digest()
        c = config_from_dict(tiny_config_dict(tmp_path / "a", seed=4))
        assert a.digest() != c.digest()


class TestExitCodes:
    def test_usage_error_is_one(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["no-such-command"])
        assert exc.value.code == cli.EXIT_USAGE

    def test_invalid_config_is_one(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("family: pendulum\n")
        assert cli.main(["collect", str(bad)]) == cli.EXIT_USAGE

    def test_missing_upstream_artifact_is_two(self, tiny_config_file, capsys):
        code = cli.main(["train-repr", str(tiny_config_file)])
        assert code == cli.EXIT_MISSING_ARTIFACT
        assert "collect" in capsys.readouterr().err

    def test_imitate_without_repr_names_train_repr(self, tiny_config_file, capsys):
        cfg = load_config(tiny_config_file)
        # fabricate demos so only the representation is missing
        from crossimit import envs
        from crossimit.trajectories import RandomPolicy, collect, save

        config = envs.sample_config(cfg.config_space, cfg.family, cfg.obs_mode, seed=0)
        save(collect(RandomPolicy(1), config, 1, seed=1), cfg.output_dir / "demos.jsonl")
        code = cli.main(["imitate", str(tiny_config_file),
                         "--target", "1.4,1.2", "--algorithm", "ir-gail"])
        assert code == cli.EXIT_MISSING_ARTIFACT
        assert "train-repr" in capsys.readouterr().err

    def test_bad_target_is_usage_error(self, tiny_config_file):
        assert cli.main(["imitate", str(tiny_config_file), "--target", "abc",
                         "--algorithm", "gail"]) == cli.EXIT_USAGE


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    """End-to-end run of all five stages at a small budget."""
    tmp = tmp_path_factory.mktemp("pipeline")
    path = tmp / "exp.yaml"
    data = tiny_config_dict(tmp / "out")
    # enough PPO budget that experts clearly beat the random reference
    data["ppo"] = {"steps_per_iteration": 1024, "epochs": 4, "minibatch_size": 256}
    data["expert"] = {"iterations": 40, "target_return_fraction": 0.6}
    path.write_text(yaml.safe_dump(data))
    assert cli.main(["gen-experts", str(path)]) == 0
    assert cli.main(["collect", str(path)]) == 0
    assert cli.main(["train-repr", str(path)]) == 0
    assert cli.main(["train-repr", str(path), "--variant", "nodyn"]) == 0
    assert cli.main(["imitate", str(path), "--target", "1.4,1.2",
                     "--algorithm", "gail"]) == 0
    assert cli.main(["evaluate", str(path), "--skip-ablation"]) == 0
    return tmp / "out"


class TestPipelineSmoke:

    def test_artifacts_exist(self, pipeline_dir):
        for name in ("demos.jsonl", "rollouts.jsonl", "repr.json", "repr-nodyn.json",
                     "table.csv", "table.png", "coupling.csv", "coupling.png",
                     "repr-losses.csv", "repr-losses.png"):
            assert (pipeline_dir / name).exists(), name

    def test_manifest_lists_pipeline_stages(self, pipeline_dir):
        manifest = json.loads((pipeline_dir / "manifest.json").read_text())
        stages = set(manifest["stages"])
        assert {"gen-experts", "collect", "train-repr", "evaluate"} <= stages
        assert any(s.startswith("imitate:") for s in stages)
        digests = {s["config_digest"] for s in manifest["stages"].values()}
        assert len(digests) == 1

    def test_metrics_csv_schema(self, pipeline_dir):
        metrics = list((pipeline_dir / "metrics").glob("*.csv"))
        assert metrics
        header = metrics[0].read_text().splitlines()[0]
        assert header == "iteration,disc_loss,mean_imitation_reward,true_return"

    def test_gail_flag_routes_to_identity_path(self, pipeline_dir):
        # identity-map runs exist alongside ir-gail runs from evaluate
        runs = {p.stem for p in (pipeline_dir / "policies").glob("*.json")}
        assert any(r.startswith("gail-") for r in runs)
        assert any(r.startswith("ir-gail-") for r in runs)


class TestReproducibility:
    def test_collect_stage_regenerates_bit_identical(self, tmp_path):
        import subprocess, sys

        data = tiny_config_dict(tmp_path / "out")
        path = tmp_path / "exp.yaml"
        path.write_text(yaml.safe_dump(data))
        assert cli.main(["collect", str(path)]) == 0
        first = (tmp_path / "out" / "rollouts.jsonl").read_bytes()
        (tmp_path / "out" / "rollouts.jsonl").unlink()
        assert cli.main(["collect", str(path)]) == 0
        second = (tmp_path / "out" / "rollouts.jsonl").read_bytes()
        assert first == second
