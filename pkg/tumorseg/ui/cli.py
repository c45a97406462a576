# -*- coding: utf-8 -*-

"""
Command Line Interface for tumorseg.

Each `cmd_*` function takes the parsed argparse namespace, writes its
declared artifact and returns normally; `run` turns escaping errors into
an exit code and a single JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path
from typing import Callable

from tumorseg.seglib.checkpoint import load_checkpoint
from tumorseg.seglib.config import ModelConfig, RunConfig
from tumorseg.seglib.data.case import list_cases, read_case, write_case
from tumorseg.seglib.data.phantom import PhantomSpec, gen_phantom
from tumorseg.seglib.data.preprocess import load_cases
from tumorseg.seglib.errors import CaseIOError, ConfigError, NumericError, SegError, UsageError
from tumorseg.seglib.evaluation import metrics, split, stats
from tumorseg.seglib.events import CheckpointSaved, EpochCompleted, LearningRateReduced, Observer
from tumorseg.seglib.nn import gradcheck
from tumorseg.seglib.nn.network import SegmentationNetwork
from tumorseg.seglib.trainer import predict, train

logger = logging.getLogger(__name__)

FOLDS_FILE = "folds.json"
CONFIG_FILE = "config.json"


def _write_json(path: Path, document: dict) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(document, f, indent=2)
            f.write("\n")
    except OSError as oe:
        raise CaseIOError(f"unable to write {path}: {oe}") from oe
    logger.info("Wrote %s" % path)


def _prepare_out_dir(out: Path, force: bool) -> None:
    if out.exists() and not out.is_dir():
        raise UsageError(f"{out} exists and is not a directory")
    if out.exists() and any(out.iterdir()):
        if not force:
            raise UsageError(f"output directory {out} is not empty; pass --force to overwrite")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)


def cmd_gen_phantoms(args: argparse.Namespace) -> None:
    """
    Writes `count` phantom case directories; case i is seeded with (seed, i).
    """
    divisor = 2 ** args.levels
    if args.size % divisor:
        raise ConfigError(f"--size {args.size} must be divisible by {divisor} "
                          f"(2 ** levels with levels={args.levels})")
    if args.count < 1:
        raise UsageError("--count must be at least 1")
    _prepare_out_dir(args.out, args.force)
    spec = PhantomSpec(size=args.size, noise=args.noise)
    for i in range(args.count):
        write_case(args.out, gen_phantom(spec, [args.seed, i], case_id=f"case-{i:04d}"))
    logger.info("Generated %d phantoms of size %d in %s" % (args.count, args.size, args.out))
    print(f"Generated {args.count} cases in {args.out}")


def cmd_split(args: argparse.Namespace) -> None:
    case_stats = [split.case_stats(read_case(path)) for path in list_cases(args.data)]
    strata = split.stratify(case_stats)
    assignment = split.kfold_split(strata, args.seed)
    assignment.correlations = split.correlations(case_stats)
    assignment.composition = split.composition(assignment, case_stats)
    assignment.save(args.out)
    print(f"Split {len(case_stats)} cases into {len(assignment.folds)} folds "
          f"over {len(set(strata.values()))} strata: {args.out}")


class _ProgressLogger(Observer):
    def __init__(self):
        super().__init__()
        self.register(EpochCompleted, self.epoch_completed)
        self.register(LearningRateReduced, self.lr_reduced)
        self.register(CheckpointSaved, self.checkpoint_saved)

    @staticmethod
    def epoch_completed(entry):
        print(f"epoch {entry.epoch:4d}  train {entry.train_loss:.6f}  val {entry.val_loss:.6f}  "
              f"dice {entry.dice_wt:.4f}/{entry.dice_tc:.4f}/{entry.dice_et:.4f}  lr {entry.lr:.3e}")

    @staticmethod
    def lr_reduced(epoch, old_lr, new_lr):
        logger.info("Learning rate reduced after epoch %d: %.3e -> %.3e" % (epoch, old_lr, new_lr))

    @staticmethod
    def checkpoint_saved(epoch, directory, mean_dice):
        logger.info("Checkpoint for epoch %d (mean dice %.4f) saved to %s" % (epoch, mean_dice, directory))


def cmd_train(args: argparse.Namespace) -> None:
    config = RunConfig.from_file(args.config)
    # data paths in the config are relative to the config file
    base = Path(args.config).parent
    assignment = split.FoldAssignment.load(base / config.data.folds)
    fold = assignment.fold(args.fold)
    train_cases = load_cases(base / config.data.dir, fold["train"], config.data.crop_size)
    val_cases = load_cases(base / config.data.dir, fold["val"], config.data.crop_size)
    _prepare_out_dir(args.out, args.force)
    with _ProgressLogger():
        result = train(config.model, config.train, train_cases, val_cases, out_dir=args.out,
                       meta={"fold": args.fold, "crop_size": config.data.crop_size})
    assignment.save(args.out / FOLDS_FILE)
    _write_json(args.out / CONFIG_FILE, config.to_dict())
    print(f"Best epoch {result.best_epoch} with mean validation dice {result.best_dice:.4f}; "
          f"checkpoint in {args.out}")


def cmd_eval(args: argparse.Namespace) -> None:
    """
    Scores one fold subset; writes the per-case reports and their aggregate
    as JSON and a one-row fold table next to it.
    """
    network, manifest = load_checkpoint(args.ckpt)
    folds_path = args.folds or args.ckpt / FOLDS_FILE
    assignment = split.FoldAssignment.load(folds_path)
    case_ids = assignment.fold(args.fold)[args.split]
    if not case_ids:
        raise UsageError(f"fold {args.fold} has no {args.split} cases")
    crop_size = manifest.get("meta", {}).get("crop_size")
    cases = load_cases(args.data, case_ids, crop_size)
    reports = [metrics.evaluate_case(probs, case, args.threshold)
               for probs, case in zip(predict(network, cases), cases)]
    summary = metrics.aggregate(reports)
    _write_json(args.out, {"fold": args.fold, "split": args.split, "threshold": args.threshold,
                           "cases": [r.to_dict() for r in reports], "aggregate": summary})
    stats.write_fold_table(args.out.with_suffix(".csv"), [metrics.fold_row(summary, args.fold)],
                           metrics.FOLD_COLUMNS)
    print(f"Evaluated {len(reports)} cases; mean dice "
          + "/".join(f"{summary['dice'][c]['mean']:.4f}" for c in ("wt", "tc", "et")))


def cmd_stats(args: argparse.Namespace) -> None:
    comparison = stats.compare_tables(stats.combine_fold_tables(args.a), stats.combine_fold_tables(args.b))
    _write_json(args.out, comparison)
    print(f"{'column':10s} {'n':>3s} {'mean_diff':>11s} {'t':>9s} {'p':>11s} {'cohens_d':>9s}  effect")
    for column, r in comparison["comparisons"].items():
        print(f"{column:10s} {r['n']:3d} {r['mean_diff']:11.6f} {r['t']:9.4f} {r['p']:11.6g} "
              f"{r['cohens_d']:9.4f}  {r['interpretation']}")


def cmd_gradcheck(args: argparse.Namespace) -> None:
    results = gradcheck.run_suite(seed=args.seed)
    failed = [r.name for r in results if not r.passed(args.tol)]
    print(f"{'check':22s} {'max_rel_error':>14s}")
    for r in results:
        print(f"{r.name:22s} {r.max_rel_error:14.3e}  {'ok' if r.passed(args.tol) else 'FAIL'}")
    if failed:
        raise NumericError(f"gradient checks above tolerance {args.tol}: {failed}")


def cmd_info(args: argparse.Namespace) -> None:
    model = RunConfig.from_file(args.config).model if args.config else ModelConfig()
    network = SegmentationNetwork(model)
    extent = (args.extent,) * 3
    if args.extent % model.divisor:
        raise ConfigError(f"--extent {args.extent} must be divisible by {model.divisor}")
    flops = network.flops(extent)
    info = {"model_config": model.to_dict(), "param_count": network.parameter_count(),
            "extent": args.extent, "flops": flops, "gflops": round(flops / 1e9, 3)}
    print(json.dumps(info, indent=2))


def run(command: Callable[[argparse.Namespace], None], args: argparse.Namespace) -> int:
    """
    :return: the process exit code
    """
    try:
        command(args)
    except SegError as se:
        logger.error("%s failed: %s" % (command.__name__, se))
        return report(se)
    except Exception as e:
        logger.exception("Unexpected %s" % type(e).__name__)
        _report(type(e).__name__, 1, str(e))
        return 1
    return 0


def report(error: SegError) -> int:
    """
    Writes the JSON error line for `error` and returns its exit code.
    """
    _report(type(error).__name__, error.exit_code, str(error))
    return error.exit_code


def _report(name: str, exit_code: int, message: str) -> None:
    line = json.dumps({"error": name, "exit_code": exit_code, "message": message})
    print(line, file=sys.stderr)

