"""Command-line entry point.

Exit codes: 0 success, 1 other tool error, 2 configuration error,
3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .config import load_config
from .errors import ConfigError, StepPDError
from .synth import CohortSpec, generate_cohort

log = logging.getLogger("steppd")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--data", dest="data_dir", help="directory of instrument CSVs")
    p.add_argument("--task", action="append", help="task to run (repeatable)")
    p.add_argument("--model", action="append", help="model to run (repeatable)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", dest="out_dir", help="output directory")
    p.add_argument("--workers", type=int)
    p.add_argument("--grouped-split", action="store_true", default=None,
                   help="keep each subject's visits on one side of every split")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="steppd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"steppd {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("ingest", "build the feature matrix and cohort accounting"),
        ("evaluate", "cross-validated grid search and holdout metrics"),
        ("explain", "Shapley attributions, global summaries, heatmap, waterfalls"),
        ("embed", "t-SNE coordinates per task"),
        ("report", "assemble report.md / report.json from existing outputs"),
        ("run", "ingest, evaluate, explain, embed and report in one go"),
    ]:
        _add_common(sub.add_parser(name, help=help_))
    s = sub.add_parser("synth", help="write a synthetic cohort")
    s.add_argument("spec", nargs="?", help="cohort spec YAML (defaults if omitted)")
    s.add_argument("--out", dest="out_dir", required=True)
    s.add_argument("--seed", type=int)
    return parser


def _run_config(args):
    return load_config(
        args.config, data_dir=args.data_dir, tasks=args.task, models=args.model,
        seed=args.seed, out_dir=args.out_dir, workers=args.workers,
        grouped_split=args.grouped_split,
    )


def dispatch(args) -> None:
    from . import pipeline

    if args.command == "synth":
        try:
            spec = CohortSpec.load(args.spec) if args.spec else CohortSpec()
        except (OSError, TypeError, ValueError) as exc:
            raise ConfigError(f"cohort spec: {exc}") from None
        if args.seed is not None:
            spec.seed = args.seed
        out = generate_cohort(spec, args.out_dir)
        print(f"wrote {out.manifest['common_visits']} visits to {out.out_dir}")
        return
    cfg = _run_config(args)
    stages = {
        "ingest": pipeline.run_ingest,
        "evaluate": pipeline.run_evaluate,
        "explain": pipeline.run_explain,
        "embed": pipeline.run_embed,
        "report": pipeline.run_report,
        "run": pipeline.run_pipeline,
    }
    pipeline.stage_dir(cfg)
    stages[args.command](cfg)
    print(f"{args.command}: outputs in {cfg.out_dir}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        dispatch(args)
    except StepPDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
