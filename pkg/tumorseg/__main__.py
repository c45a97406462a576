# !/usr/bin/env python
# -*- coding: utf-8 -*-

"""
tumorseg trains and evaluates a 3D brain tumor segmentation network.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from tumorseg import __version__
from tumorseg.seglib.errors import UsageError
from tumorseg.ui import cli


def configure_logging(log_level):
    formatter = logging.Formatter(
        fmt="%(asctime)s [%(levelname)12s]: %(name)s : %(message)s")
    app_logger = logging.getLogger("tumorseg")
    app_logger.setLevel(log_level)
    for handler in list(app_logger.handlers):
        app_logger.removeHandler(handler)

    # stdout carries command output
    stream_handler = logging.StreamHandler(stream=sys.stderr)
    stream_handler.setFormatter(formatter)
    app_logger.addHandler(stream_handler)


class ArgumentParser(argparse.ArgumentParser):
    """
    Raises UsageError instead of printing usage and exiting.
    """

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = ArgumentParser(prog="python -m tumorseg",
                                     description="3D brain tumor segmentation from scratch.")
    parser.add_argument("--version", action="version",
                        version=__version__)
    parser.add_argument("-d", "--debug", help="Print debug-level output.",
                        action="store_const", dest="loglevel",
                        const=logging.DEBUG, default=logging.ERROR)
    parser.add_argument("-v", "--verbose", help="Print verbose output (but "
                                                "still less verbose than "
                                                "debug-level.)",
                        action="store_const", dest="loglevel",
                        const=logging.INFO)

    subparsers = parser.add_subparsers(dest="command")

    gen = subparsers.add_parser("gen-phantoms", help="Generate synthetic tumor cases.")
    gen.add_argument("--count", type=int, required=True, help="Number of cases.")
    gen.add_argument("--size", type=int, required=True, help="Cubic volume extent.")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", type=Path, required=True, help="Directory receiving the cases.")
    gen.add_argument("--levels", type=int, default=4,
                     help="Network depth the cases must fit; size must divide by 2 ** levels.")
    gen.add_argument("--noise", type=float, default=0.05, help="Gaussian noise sigma.")
    gen.add_argument("--force", action="store_true", help="Replace a non-empty output directory.")
    gen.set_defaults(func=cli.cmd_gen_phantoms)

    split = subparsers.add_parser("split", help="Assign cases to stratified folds.")
    split.add_argument("--data", type=Path, required=True, help="Directory of case directories.")
    split.add_argument("--seed", type=int, default=0)
    split.add_argument("--out", type=Path, required=True, help="Fold assignment JSON to write.")
    split.set_defaults(func=cli.cmd_split)

    train = subparsers.add_parser("train", help="Train on one fold.")
    train.add_argument("--config", type=Path, required=True, help="Run config JSON.")
    train.add_argument("--fold", type=int, required=True)
    train.add_argument("--out", type=Path, required=True, help="Checkpoint directory to write.")
    train.add_argument("--force", action="store_true", help="Replace a non-empty output directory.")
    train.set_defaults(func=cli.cmd_train)

    evaluate = subparsers.add_parser("eval", help="Score a checkpoint on one fold subset.")
    evaluate.add_argument("--ckpt", type=Path, required=True, help="Checkpoint directory.")
    evaluate.add_argument("--data", type=Path, required=True, help="Directory of case directories.")
    evaluate.add_argument("--fold", type=int, required=True)
    evaluate.add_argument("--split", choices=("train", "val", "test"), default="test")
    evaluate.add_argument("--out", type=Path, required=True, help="Metrics JSON to write.")
    evaluate.add_argument("--folds", type=Path, default=None,
                          help="Fold assignment; defaults to the one stored with the checkpoint.")
    evaluate.add_argument("--threshold", type=float, default=0.5)
    evaluate.set_defaults(func=cli.cmd_eval)

    stats = subparsers.add_parser("stats", help="Paired t-tests between two models' fold tables.")
    stats.add_argument("--a", type=Path, nargs="+", required=True,
                       help="Fold table(s) of the first model; one-row tables from each eval run are stacked.")
    stats.add_argument("--b", type=Path, nargs="+", required=True,
                       help="Fold table(s) of the second model.")
    stats.add_argument("--out", type=Path, required=True, help="Report JSON to write.")
    stats.set_defaults(func=cli.cmd_stats)

    gradcheck = subparsers.add_parser("gradcheck", help="Finite-difference check of every backward pass.")
    gradcheck.add_argument("--tol", type=float, default=1e-4)
    gradcheck.add_argument("--seed", type=int, default=0)
    gradcheck.set_defaults(func=cli.cmd_gradcheck)

    info = subparsers.add_parser("info", help="Parameter count and FLOPs of a model config.")
    info.add_argument("--config", type=Path, default=None, help="Run config JSON; defaults when omitted.")
    info.add_argument("--extent", type=int, default=128, help="Cubic input extent for the FLOPs estimate.")
    info.set_defaults(func=cli.cmd_info)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as ue:
        configure_logging(logging.ERROR)
        return cli.report(ue)
    configure_logging(args.loglevel)
    if not getattr(args, "func", None):
        parser.print_help()
        return 2
    return cli.run(args.func, args)


if __name__ == "__main__":
    sys.exit(main())
