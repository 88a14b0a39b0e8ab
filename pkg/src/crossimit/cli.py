"""Command-line pipeline driver.

Subcommands (all take an experiment config file):

    gen-experts   train demonstration experts and write demos.jsonl
    collect       random rollouts on training robots -> rollouts.jsonl
    train-repr    train the invariant representation -> repr[-variant].json
    imitate       one adversarial imitation run on a target robot
    evaluate      interpolation/extrapolation table, ablation, and coupling

Exit codes: 0 success, 1 usage or configuration error, 2 missing upstream
artifact, 3 numerical failure during training.
"""

from __future__ import annotations

import argparse
import sys

from . import pipeline
from .envs import RobotConfig
from .experiment import MissingArtifactError, NumericalFailure, load_config

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MISSING_ARTIFACT = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crossimit",
                     description="Cross-robot imitation via invariant representations")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="experiment config file (YAML)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's root seed")
        p.add_argument("--output-dir", default=None,
                       help="override the config's output directory")
        return p

    add("gen-experts", "train demonstration experts and collect demos")
    add("collect", "collect random rollouts on training robots")

    p = add("train-repr", "train the invariant representation module")
    p.add_argument("--variant", choices=sorted(pipeline.REPR_VARIANTS),
                   default="default",
                   help="zero one loss term (nodyn / nodisent) for ablations")

    p = add("imitate", "run adversarial imitation on one target robot")
    p.add_argument("--target", required=True,
                   help="comma-separated target parameters, e.g. 1.5,1.0")
    p.add_argument("--algorithm", choices=pipeline.ALGORITHMS, default="ir-gail")
    p.add_argument("--seed-index", type=int, default=0)

    p = add("evaluate", "produce table/ablation/coupling CSVs and figures")
    p.add_argument("--skip-table", action="store_true")
    p.add_argument("--skip-ablation", action="store_true")
    p.add_argument("--skip-coupling", action="store_true")
    p.add_argument("--ablation-mode", choices=["interpolation", "extrapolation"],
                   default="interpolation")
    return parser


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        data = cfg.to_dict()
        data["seed"] = args.seed
        from .experiment import config_from_dict

        cfg = config_from_dict(data)
    if args.output_dir is not None:
        from pathlib import Path

        cfg.output_dir = Path(args.output_dir)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except (OSError, ValueError, KeyError) as err:
        print(f"error: invalid config: {err}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.command == "gen-experts":
            result = pipeline.stage_gen_experts(cfg)
            print(f"wrote {result['demos']} and {len(result['experts'])} expert checkpoints")
        elif args.command == "collect":
            result = pipeline.stage_collect(cfg)
            print(f"wrote {result['rollouts']}")
        elif args.command == "train-repr":
            result = pipeline.stage_train_repr(cfg, variant=args.variant)
            print(f"wrote {result['checkpoint']}")
        elif args.command == "imitate":
            try:
                params = tuple(float(x) for x in args.target.split(","))
                target = RobotConfig(cfg.family, params, cfg.obs_mode)
            except ValueError as err:
                print(f"error: invalid --target: {err}", file=sys.stderr)
                return EXIT_USAGE
            result = pipeline.stage_imitate(cfg, target, args.algorithm, args.seed_index)
            final = result["metrics"][-1]["true_return"] if result["metrics"] else float("nan")
            print(f"wrote {result['policy_path']} (final true return {final:.1f})")
        elif args.command == "evaluate":
            pipeline.stage_evaluate(
                cfg,
                table=not args.skip_table,
                ablation=not args.skip_ablation,
                coupling=not args.skip_coupling,
                ablation_mode=args.ablation_mode,
            )
            print(f"wrote evaluation outputs under {cfg.output_dir}")
    except MissingArtifactError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_MISSING_ARTIFACT
    except NumericalFailure as err:
        print(f"error: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
