"""
CLI entry point for the DMTP trajectory prediction and explanation toolkit.

Parses command-line arguments and delegates execution to the ExperimentPipeline
facade. Responsible only for argument parsing, configuration layering and
mapping errors to exit codes; no business logic.

Configuration precedence: flags > --config file > environment (.env) > defaults.

Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures. Every
diagnostic starts with one of ``usage error:``, ``missing file:``,
``schema mismatch:``, ``prediction mismatch:`` or ``runtime failure:``.

Usage:
    python dmtp.py gen-data --family turn --count 10 --seed 1 --out data/turn
    python dmtp.py train --data data/turn --config run.cfg --out runs/turn
    python dmtp.py predict --checkpoint runs/turn/checkpoint.npz --data data/turn --out runs/turn
    python dmtp.py evaluate --predictions runs/turn/predictions.json --data data/turn --out runs/turn
    python dmtp.py explain --data data/turn --oracle map --out runs/explain
    python dmtp.py explain-global --data data/turn --checkpoint runs/turn/checkpoint.npz --out runs/global
    python dmtp.py ablate --grid encoder --data data/turn --out runs/ablation
    python dmtp.py info-demo --out runs/info
"""

import argparse
import sys
from dataclasses import fields
from pathlib import Path
from typing import Any, Sequence

from src.config import settings
from src.config.train_config import (
    AblationMask,
    TrainConfig,
    build_generator_config,
    build_train_config,
    check_config_keys,
    read_config_file,
)
from src.errors import (
    CheckpointError,
    ConfigError,
    DmtpError,
    PredictionMismatchError,
    SceneParseError,
    UsageError,
)
from src.explain.shapley import METRICS
from src.models.models import SCENARIO_FAMILIES
from src.pipeline.experiment import ORACLES, ExperimentPipeline
from src.scene.generator import GeneratorConfig
from src.training.ablation import GRIDS


class DmtpArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises UsageError instead of exiting."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{message}\n{self.format_usage().rstrip()}")


def _common_options() -> argparse.ArgumentParser:
    common = DmtpArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Random seed (default: DMTP_SEED or 0).")
    common.add_argument(
        "--config", type=Path, default=None, metavar="FILE", help="Flat KEY=value run-configuration file."
    )
    common.add_argument(
        "--out",
        type=Path,
        default=settings.OUTPUTS_DIR,
        metavar="DIR",
        help="Output directory (default: DMTP_OUTPUT_DIR or outputs/).",
    )
    common.add_argument("--quiet", action="store_true", help="Hide progress bars.")
    return common


def _explain_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", required=True, type=Path, help="Dataset directory.")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--checkpoint", type=Path, help="Trained checkpoint to explain.")
    source.add_argument("--oracle", choices=ORACLES, help="Explain a built-in reference predictor instead.")
    parser.add_argument("--metric", choices=METRICS, default="minSADE", help="Error the values are built on.")
    parser.add_argument(
        "--shapley-seeds", type=int, default=settings.SHAPLEY_SEEDS, help="Diffusion seeds averaged per coalition."
    )
    parser.add_argument("--workers", type=int, default=1, help="Threads evaluating coalitions.")


def _build_argument_parser() -> DmtpArgumentParser:
    """Build and return the CLI argument parser."""
    parser = DmtpArgumentParser(
        prog="dmtp",
        description="Diffusion multimodal trajectory prediction with exact feature attribution.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    common = _common_options()
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    gen = commands.add_parser("gen-data", parents=[common], help="Generate a synthetic scene dataset.")
    gen.add_argument("--family", required=True, choices=SCENARIO_FAMILIES)
    gen.add_argument("--count", type=int, default=10)
    gen.add_argument(
        "--map-determined", action="store_true", help="Futures fixed by lane geometry and nominal speed."
    )

    train = commands.add_parser("train", parents=[common], help="Train a model on a dataset.")
    train.add_argument("--data", required=True, type=Path)
    train.add_argument("--validation", type=Path, default=None, help="Validation dataset (default: training data).")
    train.add_argument("--epochs", type=int, default=None)
    train.add_argument("--max-steps", type=int, default=None)
    train.add_argument("--freeze-diffusion", action="store_true")

    predict = commands.add_parser("predict", parents=[common], help="Sample K joint futures per scene.")
    predict.add_argument("--checkpoint", required=True, type=Path)
    predict.add_argument("--data", required=True, type=Path)

    evaluate = commands.add_parser("evaluate", parents=[common], help="Score predictions against ground truth.")
    evaluate.add_argument("--predictions", required=True, type=Path)
    evaluate.add_argument("--data", required=True, type=Path)
    evaluate.add_argument("--miss-threshold", type=float, default=None)

    explain = commands.add_parser("explain", parents=[common], help="Per-scene Shapley feature importance.")
    _explain_options(explain)
    explain.add_argument("--scene-id", default=None, help="Explain only this scene.")

    explain_global = commands.add_parser("explain-global", parents=[common], help="Dataset-level importance.")
    _explain_options(explain_global)

    ablate = commands.add_parser("ablate", parents=[common], help="Run an encoder or decoder ablation grid.")
    ablate.add_argument("--grid", required=True, choices=GRIDS)
    ablate.add_argument("--data", required=True, type=Path)
    ablate.add_argument("--eval-data", type=Path, default=None, help="Evaluation dataset (default: training data).")

    commands.add_parser("info-demo", parents=[common], help="Exact information theory on built-in tables.")
    return parser


def _file_values(args: argparse.Namespace) -> dict[str, Any]:
    if args.config is None:
        return {}
    values = read_config_file(args.config)
    check_config_keys(values)
    return values


def _train_config(args: argparse.Namespace, values: dict[str, Any]) -> TrainConfig:
    flags = {
        "seed": args.seed,
        "epochs": getattr(args, "epochs", None),
        "max_steps": getattr(args, "max_steps", None),
        "freeze_diffusion": getattr(args, "freeze_diffusion", False) or None,
        "miss_threshold": getattr(args, "miss_threshold", None),
    }
    return build_train_config({**values, **{k: v for k, v in flags.items() if v is not None}})


def _requested_mask(values: dict[str, Any], config: TrainConfig) -> AblationMask | None:
    mask_keys = {f.name for f in fields(AblationMask)}
    return config.ablation if mask_keys & {key.lower() for key in values} else None


def _run(args: argparse.Namespace) -> None:
    values = _file_values(args)
    config = _train_config(args, values)
    pipeline = ExperimentPipeline(args.out, show_progress=not args.quiet)
    if getattr(args, "shapley_seeds", 1) < 1 or getattr(args, "workers", 1) < 1:
        raise UsageError("--shapley-seeds and --workers must be at least 1")
    seeds = [config.seed + i for i in range(getattr(args, "shapley_seeds", 1))]

    if args.command == "gen-data":
        base = GeneratorConfig.map_determined() if args.map_determined else GeneratorConfig()
        pipeline.generate_data(args.family, args.count, config.seed, build_generator_config(values, base))
    elif args.command == "train":
        pipeline.train(args.data, config, args.validation)
    elif args.command == "predict":
        pipeline.predict(args.checkpoint, args.data, config.seed, _requested_mask(values, config))
    elif args.command == "evaluate":
        pipeline.evaluate(args.predictions, args.data, config.miss_threshold, config.seed)
    elif args.command == "explain":
        pipeline.explain(
            args.data,
            args.metric,
            seeds,
            checkpoint_path=args.checkpoint,
            oracle=args.oracle,
            scene_id=args.scene_id,
            workers=args.workers,
            requested_mask=_requested_mask(values, config),
        )
    elif args.command == "explain-global":
        pipeline.explain_global(
            args.data,
            args.metric,
            seeds,
            checkpoint_path=args.checkpoint,
            oracle=args.oracle,
            workers=args.workers,
            requested_mask=_requested_mask(values, config),
        )
    elif args.command == "ablate":
        pipeline.ablate(args.grid, args.data, config, args.eval_data)
    elif args.command == "info-demo":
        pipeline.info_demo(config.seed)


def dispatch(argv: Sequence[str]) -> int:
    """Run one command and return its exit code."""
    parser = _build_argument_parser()
    try:
        args = parser.parse_args(list(argv))
        _run(args)
    except SystemExit as exit_request:
        return int(exit_request.code or 0)
    except (UsageError, ConfigError) as error:
        print(f"usage error: {error}", file=sys.stderr)
        return 1
    except FileNotFoundError as error:
        print(f"missing file: {error}", file=sys.stderr)
        return 2
    except (SceneParseError, CheckpointError) as error:
        print(f"schema mismatch: {error}", file=sys.stderr)
        return 2
    except PredictionMismatchError as error:
        print(f"prediction mismatch: {error}", file=sys.stderr)
        return 2
    except DmtpError as error:
        print(f"runtime failure: {error}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
