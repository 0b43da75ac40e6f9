"""Command-line entry point: ``ssagcn <verb> [options]``.

Exit codes: 0 success, 2 usage or config error, 3 dataset error,
4 missing prerequisite artifact, 5 training diverged, 1 anything else.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import harness
from .config import ExperimentConfig, load_config
from .graph import DatasetError
from .model import TrainingDivergedError
from .numkit import ConfigError, NonFiniteError

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_DATA, EXIT_MISSING, EXIT_DIVERGED = 0, 1, 2, 3, 4, 5


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # verbs repeat the global flags with suppressed defaults so values given
    # before the verb are not reset by the subparser
    p = argparse.ArgumentParser(add_help=False)
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="experiment INI file")
    p.add_argument("--seed", type=int, default=d(None), help="override [experiment] base_seed")
    p.add_argument("--runs", type=int, default=d(None), help="override [experiment] num_runs")
    p.add_argument("--output-dir", default=d(None), help="override [experiment] output_dir")
    p.add_argument("--deterministic", action="store_true", default=d(None),
                   help="single-threaded, bitwise reproducible execution")
    p.add_argument("-v", "--verbose", action="count", default=d(0))
    return p


def build_parser() -> argparse.ArgumentParser:
    flags = _global_flags(suppress=True)
    parser = argparse.ArgumentParser(prog="ssagcn", parents=[_global_flags(suppress=False)],
                                     description="Semantic-structural attention GCN experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("prepare", parents=[flags], help="parse the dataset and write splits")
    embed = sub.add_parser("embed", parents=[flags], help="train node2vec or TransE embeddings")
    embed.add_argument("--which", choices=("structure", "semantic"), required=True)
    train = sub.add_parser("train", parents=[flags], help="train a model variant over all runs")
    train.add_argument("--variant", choices=harness.VARIANT_CHOICES, required=True)
    sub.add_parser("export", parents=[flags], help="write labelled embedding TSVs for plotting")
    sub.add_parser("report", parents=[flags], help="aggregate result records into a table")
    return parser


def _config_from(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    return config.with_overrides(base_seed=args.seed, num_runs=args.runs, output_dir=args.output_dir,
                                 deterministic=args.deterministic)


def _run(args) -> None:
    config = _config_from(args)
    if config.deterministic and config.walk.workers != 1:
        config = config.with_overrides(walk=replace(config.walk, workers=1))
    if args.command == "prepare":
        info = harness.cmd_prepare(config)
        state = "cache hit" if info["cached"] else "prepared"
        print(f"{state}: {info['num_nodes']} nodes, {info['num_edges']} edges, "
              f"{info['num_classes']} classes, {info['feature_dim']} features")
    elif args.command == "embed":
        print(harness.cmd_embed(config, args.which))
    elif args.command == "train":
        for rec in harness.cmd_train(config, args.variant):
            print(f"{rec['variant']}: dev {100 * rec['dev_mean']:.2f} ± {100 * rec['dev_std']:.2f}  "
                  f"test {100 * rec['test_mean']:.2f} ± {100 * rec['test_std']:.2f}  ({rec['num_runs']} runs)")
    elif args.command == "export":
        for path in harness.cmd_export(config):
            print(path)
    elif args.command == "report":
        text, summary = harness.cmd_report(config)
        print(text, end="")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        _run(args)
    except (ConfigError, ValueError) as exc:
        if isinstance(exc, DatasetError):
            print(f"dataset error: {exc}", file=sys.stderr)
            return EXIT_DATA
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except harness.ArtifactMissingError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (TrainingDivergedError, NonFiniteError) as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        return EXIT_OTHER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
