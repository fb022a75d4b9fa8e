"""Command-line entry point: ``graphmu <subcommand> --config <path>``.

Sub-commands map 1:1 onto pipeline stages so partial pipelines are
scriptable; ``run`` chains all of them and writes the result record,
delimited tables, and rendered figures.  Exit code 0 on success; a stage
failure prints the stage name and exits nonzero.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .pipeline import (
    ExperimentConfig,
    StageError,
    load_config,
    run_pipeline,
    stage_attack,
    stage_build,
    stage_detect,
    stage_repair,
    stage_train,
    stage_validate,
    summary_table,
)

STAGES = {
    "train": stage_train,
    "attack": stage_attack,
    "detect": stage_detect,
    "build": stage_build,
    "repair": stage_repair,
    "validate": stage_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphmu",
        description="Repair poisoned graph convolutional networks by unlearning "
                    "detected perturbations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in list(STAGES) + ["run"]:
        cmd = sub.add_parser(name, help=f"run the {name} stage" if name != "run"
                             else "run the whole pipeline")
        cmd.add_argument("--config", required=True, help="experiment config (INI)")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--out", default=None, help="override the output directory")
    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except Exception as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "run":
            result = run_pipeline(cfg)
            print(summary_table(result))
            print(f"artifacts written to {Path(cfg.out_dir).resolve()}")
        else:
            info = STAGES[args.command](cfg)
            print(f"stage {args.command} complete; artifacts in "
                  f"{Path(cfg.out_dir).resolve()}")
            for key, value in info.items():
                if key.endswith("_seconds"):
                    print(f"  {key}: {value:.4f}")
    except StageError as exc:
        print(f"error in stage {exc.stage}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
