"""Command-line entry point.

Subcommands mirror the pipeline stages plus `run` (all stages in order),
`agree-files` (standalone agreement scoring), and `export`. Exit codes:
0 success, 2 configuration error, 3 missing stage prerequisite, 4 backend
error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .agreement import build_agreement_report, load_labeled_instances
from .errors import ConfigError, GatewayError, PrerequisiteError, TaxalignError
from .pipeline import STAGES, Pipeline, PipelineConfig, WorkdirLock, dump_json

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PREREQUISITE = 3
EXIT_BACKEND = 4


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="pipeline config JSON")
    parser.add_argument("--workdir", required=True, help="working directory for artifacts")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--dry-run", action="store_true", help="report what would run")
    parser.add_argument("--force", action="store_true", help="ignore stage stamps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="taxalign")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run all stages in order")
    _add_common(run)
    run.add_argument(
        "--stages",
        default="all",
        help="comma-separated stage subset (default: all)",
    )

    for stage in STAGES:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        _add_common(p)
        if stage == "merge":
            p.add_argument("--batch-size", type=int, default=None, help="candidate batch bound")
            p.add_argument("--theta-mean", type=float, default=None)
            p.add_argument("--theta-max", type=float, default=None)
            p.add_argument(
                "--embed-input", choices=["label", "label+explanation"], default=None
            )
            p.add_argument("--resume", action="store_true", help="resume from round state")
            p.add_argument(
                "--lock-label",
                action="append",
                default=[],
                help="pin a topic label so merging never consumes it (repeatable)",
            )

    agree_files = sub.add_parser(
        "agree-files", help="score agreement between two annotation JSONL files"
    )
    agree_files.add_argument("--a", required=True, help="annotations file A (JSONL)")
    agree_files.add_argument("--b", required=True, help="annotations file B (JSONL)")
    agree_files.add_argument("--universe", required=True, help="JSON array of valid codes")
    agree_files.add_argument("--dimension", default=None)
    agree_files.add_argument("--rounds", type=int, default=1000)
    agree_files.add_argument("--level", type=float, default=0.95)
    agree_files.add_argument("--seed", type=int, default=0)
    agree_files.add_argument("--out", default=None, help="write report JSON here (default stdout)")
    return parser


def _load_pipeline(args) -> Pipeline:
    config = PipelineConfig.load(args.config)
    if args.seed is not None:
        config.seed = args.seed
    return Pipeline(config, args.workdir)


def _apply_merge_overrides(pipeline: Pipeline, args) -> None:
    primary = pipeline.config.primary_merge
    if getattr(args, "batch_size", None) is not None:
        primary.batch = args.batch_size
    if getattr(args, "theta_mean", None) is not None:
        primary.theta_mean = args.theta_mean
    if getattr(args, "theta_max", None) is not None:
        primary.theta_max = args.theta_max
    if getattr(args, "embed_input", None) is not None:
        primary.embed_input = args.embed_input
    for label in getattr(args, "lock_label", []):
        pipeline.config.merge_locked_labels.append(label.casefold())


def _emit(report) -> None:
    print(json.dumps(report, sort_keys=True))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        if args.command == "agree-files":
            import pathlib

            universe = json.loads(pathlib.Path(args.universe).read_text(encoding="utf-8"))
            instances = load_labeled_instances(args.a, args.b, dimension=args.dimension)
            report = build_agreement_report(
                instances, universe, rounds=args.rounds, level=args.level, seed=args.seed
            )
            if args.out:
                dump_json(pathlib.Path(args.out), report.to_dict())
            else:
                print(json.dumps(report.to_dict(), sort_keys=True, indent=2))
            return EXIT_OK

        pipeline = _load_pipeline(args)
        if args.command == "run":
            stages = list(STAGES) if args.stages == "all" else args.stages.split(",")
            for s in stages:
                if s not in STAGES:
                    raise ConfigError(f"unknown stage {s!r}")
            with WorkdirLock(pipeline.workdir):
                for s in stages:
                    _emit(pipeline.run_stage(s, force=args.force, dry_run=args.dry_run))
            return EXIT_OK

        _apply_merge_overrides(pipeline, args)
        with WorkdirLock(pipeline.workdir):
            _emit(
                pipeline.run_stage(
                    args.command,
                    force=args.force,
                    dry_run=args.dry_run,
                    merge_resume=getattr(args, "resume", False),
                )
            )
        return EXIT_OK
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except PrerequisiteError as exc:
        log.error("%s", exc)
        return EXIT_PREREQUISITE
    except GatewayError as exc:
        log.error("backend error: %s", exc)
        return EXIT_BACKEND
    except TaxalignError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
