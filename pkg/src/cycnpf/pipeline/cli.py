"""Command-line entry point.

    cycnpf prepare|train-cycvc|train-vocoder|infer|evaluate|run-all --config FILE
           [--condition C] [--vocoder V] [--seed N] [--force]

Exit codes: 0 success, 2 config error, 3 data error, 4 training abort,
5 partial evaluation. ``CYCNPF_WORKDIR`` sets the artifact root.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import CONDITIONS, VOCODERS, ConfigError, load_config
from .stages import STAGES, DataError, PartialEvaluation, Run, StageFailed
from .store import StageOrderError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_TRAINING, EXIT_PARTIAL = 0, 2, 3, 4, 5

log = logging.getLogger("cycnpf")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cycnpf", description="Neural post-filter experiment pipeline")
    parser.add_argument("command", choices=[*STAGES, "run-all"])
    parser.add_argument("--config", required=True, help="YAML experiment config")
    parser.add_argument("--condition", choices=CONDITIONS, help="restrict to one condition")
    parser.add_argument("--vocoder", choices=VOCODERS)
    parser.add_argument("--seed", type=int, help="run only this seed")
    parser.add_argument("--workdir", help="artifact root (default: $CYCNPF_WORKDIR or ./cycnpf_work)")
    parser.add_argument("--force", action="store_true", help="recompute stages that are already complete")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _runs(args):
    cfg = load_config(args.config)
    if args.condition:
        cfg.conditions = [args.condition]
    if args.vocoder:
        cfg.vocoder = args.vocoder
    cfg.validate()
    seeds = [args.seed] if args.seed is not None else list(cfg.seeds)
    return [Run(cfg, seed, args.workdir) for seed in seeds]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        for run in _runs(args):
            if args.command == "run-all":
                run.run_all(args.force)
            else:
                run.run_stage(args.command, args.force)
            print(f"{args.command}: run {run.run_key} (seed {run.seed}) -> {run.manifest.path}")
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (DataError, StageOrderError, FileNotFoundError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except StageFailed as exc:
        log.error("training aborted: %s", exc)
        return EXIT_TRAINING
    except PartialEvaluation as exc:
        log.error("%s (report written to %s)", exc, exc.report_path)
        return EXIT_PARTIAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
