"""Command line entry point: ``dforge {pretrain,distill,sweep,summarize}``."""

import argparse
import logging
import sys
from pathlib import Path

from . import experiment
from .errors import ConfigError


def _seeds(text):
    if text is None:
        return None
    parts = [p.strip() for p in text.split(",") if p.strip()]
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--seeds expects comma-separated integers, got {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="dforge", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="verb", required=True)

    for verb, help_text in (
        ("pretrain", "train and checkpoint the teacher for every seed"),
        ("distill", "run the base distillation config (sweep axes ignored) for every seed"),
        ("sweep", "run every sweep cell for every seed"),
    ):
        p = sub.add_parser(verb, help=help_text)
        p.add_argument("--config", required=True, help="config JSON path or shipped recipe name")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seeds", type=_seeds, default=None, help="override seeds, e.g. 0,1,2")
        p.add_argument("--jobs", type=int, default=1, help="parallel runs (DFORGE_DETERMINISTIC=1 forces 1)")

    p = sub.add_parser("summarize", help="aggregate summary.json files into a CSV table")
    p.add_argument("dirs", nargs="+", help="run or sweep directories")
    p.add_argument("--out", default=None, help="also write the table to this file")

    sub.add_parser("recipes", help="list shipped recipe names")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)

    if args.verb == "recipes":
        print("\n".join(experiment.recipe_names()))
        return 0
    if args.verb == "summarize":
        table, absent = experiment.summarize(args.dirs)
        sys.stdout.write(table)
        if args.out:
            Path(args.out).write_text(table)
        for p in absent:
            print(f"absent: {p} (no summary.json)", file=sys.stderr)
        return 1 if absent else 0

    try:
        cfg = experiment.load_config(args.config)
        return experiment.run(
            cfg, args.out, seeds=args.seeds, jobs=args.jobs,
            use_sweep=args.verb == "sweep", teachers_only=args.verb == "pretrain",
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
