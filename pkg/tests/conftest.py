"""Session fixtures that build the shared acceptance artifacts.

The heavy pipelines (experts, representation training, imitation sweeps) run
once per session; individual acceptance criteria read from the results.
"""

import time
from pathlib import Path

import pytest
import yaml

from crossimit import pipeline
from crossimit.experiment import config_from_dict

REPO_ROOT = Path(__file__).resolve().parent.parent
CONFIG_DIR = REPO_ROOT / "configs"


def acceptance_config(name: str, out_dir: Path):
    data = yaml.safe_load((CONFIG_DIR / name).read_text())
    data["output_dir"] = str(out_dir)
    return config_from_dict(data)


@pytest.fixture(scope="session")
def acceptance_root(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="session")
def pend_keypoint(acceptance_root):
    """Full keypoint-pendulum pipeline: demos, rollouts, three representation
    variants, and the interpolation/extrapolation table with ablation and
    coupling outputs."""
    cfg = acceptance_config("acceptance-pendulum-keypoint.yaml",
                            acceptance_root / "pend-k")
    times = {}

    def run(name, fn, *args, **kw):
        start = time.perf_counter()
        result = fn(*args, **kw)
        times[name] = time.perf_counter() - start
        return result

    run("gen_experts", pipeline.stage_gen_experts, cfg)
    run("collect", pipeline.stage_collect, cfg)
    repr_default = run("train_repr", pipeline.stage_train_repr, cfg)
    repr_nodyn = run("train_repr_nodyn", pipeline.stage_train_repr, cfg, variant="nodyn")
    repr_nodisent = run("train_repr_nodisent", pipeline.stage_train_repr, cfg,
                        variant="nodisent")
    results = run("evaluate", pipeline.stage_evaluate, cfg,
                  table=True, ablation=True, coupling=True,
                  ablation_mode="interpolation")
    return {
        "cfg": cfg,
        "results": results,
        "times": times,
        "module": repr_default["module"],
        "module_nodyn": repr_nodyn["module"],
        "module_nodisent": repr_nodisent["module"],
    }


@pytest.fixture(scope="session")
def pend_angle(acceptance_root):
    """Angle-observation control: demos plus plain-GAIL interpolation runs."""
    cfg = acceptance_config("acceptance-pendulum-angle.yaml",
                            acceptance_root / "pend-a")
    pipeline.stage_gen_experts(cfg)
    results = pipeline.stage_evaluate(cfg, table=True, ablation=False,
                                      coupling=False, algorithms=("gail",))
    return {"cfg": cfg, "results": results}


@pytest.fixture(scope="session")
def arm_keypoint(acceptance_root):
    """Two-link-arm pipeline for the dynamics-term ablation ordering."""
    cfg = acceptance_config("acceptance-arm-keypoint.yaml",
                            acceptance_root / "arm-k")
    pipeline.stage_gen_experts(cfg)
    pipeline.stage_collect(cfg)
    pipeline.stage_train_repr(cfg)
    pipeline.stage_train_repr(cfg, variant="nodyn")
    results = pipeline.stage_evaluate(cfg, table=False, ablation=True,
                                      coupling=False,
                                      ablation_mode="extrapolation")
    return {"cfg": cfg, "results": results}
