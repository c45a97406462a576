# -*- coding: utf-8 -*-

"""
Overlap and boundary metrics for binary segmentation masks.

Hausdorff distances are measured in voxel units between the full voxel
sets of two masks. Small pairs are compared all-pairs; larger ones use the
Euclidean distance transform of the target mask. Both paths take the square
root of the same integer squared distances, so they agree exactly.
"""

from __future__ import annotations

__all__ = ['dice', 'hausdorff', 'directed_distances', 'ConfusionCounts', 'confusion',
           'sensitivity', 'specificity', 'MetricReport', 'evaluate_case', 'aggregate',
           'fold_row', 'FOLD_COLUMNS', 'BRUTE_FORCE_PAIRS', 'DEFAULT_THRESHOLD']

import dataclasses
import logging
import math
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import cdist

from ..data.case import CLASSES, Case
from ..errors import ShapeError, UndefinedMetricError

logger = logging.getLogger(__name__)

BRUTE_FORCE_PAIRS = 1_000_000
DEFAULT_THRESHOLD = 0.5
METRICS = ("dice", "hd", "hd95", "sensitivity", "specificity")
FOLD_COLUMNS = ("fold",
                "dice_wt", "dice_tc", "dice_et",
                "hd_wt", "hd_tc", "hd_et",
                "sens_wt", "sens_tc", "sens_et",
                "spec_wt", "spec_tc", "spec_et")


def _check_pair(pred: np.ndarray, truth: np.ndarray, where: str) -> tuple[np.ndarray, np.ndarray]:
    if pred.shape != truth.shape:
        raise ShapeError(f"{where}: prediction {pred.shape} and truth {truth.shape} differ")
    return pred.astype(bool, copy=False), truth.astype(bool, copy=False)


def dice(pred: np.ndarray, truth: np.ndarray) -> float:
    """
    2|X n Y| / (|X| + |Y|); 1.0 when both masks are empty.
    """
    pred, truth = _check_pair(pred, truth, "dice")
    total = int(pred.sum()) + int(truth.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(pred, truth).sum()) / total


def directed_distances(source: np.ndarray, target: np.ndarray, method: str = "auto") -> np.ndarray:
    """
    Distance from every voxel of `source` to the nearest voxel of `target`.

    :param method: "brute", "edt", or "auto" (brute force below
                   BRUTE_FORCE_PAIRS point pairs)
    """
    source, target = _check_pair(source, target, "hausdorff")
    if not source.any() or not target.any():
        raise UndefinedMetricError("hausdorff: undefined for empty mask")
    if method == "auto":
        pairs = int(source.sum()) * int(target.sum())
        method = "brute" if pairs <= BRUTE_FORCE_PAIRS else "edt"
    if method == "brute":
        return cdist(np.argwhere(source), np.argwhere(target)).min(axis=1)
    if method == "edt":
        return ndimage.distance_transform_edt(~target)[source]
    raise ValueError(f"unknown hausdorff method {method!r}")


def hausdorff(pred: np.ndarray, truth: np.ndarray, percentile: float = 100, method: str = "auto") -> float:
    """
    Percentile of the pooled directed distances in both directions.
    percentile=100 is the exact symmetric Hausdorff distance, 95 is HD95.

    :raises UndefinedMetricError: if either mask is empty
    """
    if not 0 <= percentile <= 100:
        raise ValueError(f"percentile must lie in [0, 100], received {percentile}")
    forward = directed_distances(pred, truth, method)
    backward = directed_distances(truth, pred, method)
    if percentile == 100:
        return float(max(forward.max(), backward.max()))
    return float(np.percentile(np.concatenate([forward, backward]), percentile))


@dataclasses.dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(pred: np.ndarray, truth: np.ndarray) -> ConfusionCounts:
    pred, truth = _check_pair(pred, truth, "confusion")
    tp = int(np.logical_and(pred, truth).sum())
    fp = int(np.logical_and(pred, ~truth).sum())
    fn = int(np.logical_and(~pred, truth).sum())
    return ConfusionCounts(tp=tp, fp=fp, tn=pred.size - tp - fp - fn, fn=fn)


def sensitivity(counts: ConfusionCounts) -> float:
    """
    TP / (TP + FN)
    """
    if counts.tp + counts.fn == 0:
        raise UndefinedMetricError("sensitivity undefined: no positives in ground truth")
    return counts.tp / (counts.tp + counts.fn)


def specificity(counts: ConfusionCounts) -> float:
    """
    TN / (TN + FP)
    """
    if counts.tn + counts.fp == 0:
        raise UndefinedMetricError("specificity undefined: no negatives in ground truth")
    return counts.tn / (counts.tn + counts.fp)


@dataclasses.dataclass
class MetricReport:
    """
    Per-class metrics for one case. Undefined values (an empty mask for
    the Hausdorff distances, no positives or negatives for the ratios) are
    stored as None and serialized as null.
    """
    case_id: str
    dice: dict[str, float]
    hd: dict[str, Optional[float]]
    hd95: dict[str, Optional[float]]
    sensitivity: dict[str, Optional[float]]
    specificity: dict[str, Optional[float]]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> MetricReport:
        return cls(case_id=data["case_id"], **{m: dict(data[m]) for m in METRICS})


def _or_sentinel(fn, *args) -> Optional[float]:
    try:
        return fn(*args)
    except UndefinedMetricError as ue:
        logger.debug("Recording sentinel: %s" % ue)
        return None


def evaluate_case(probs: np.ndarray, case: Case, threshold: float = DEFAULT_THRESHOLD) -> MetricReport:
    """
    Binarizes `probs` (3, D, H, W), or (1, 3, D, H, W), at `threshold`
    and scores every class against the case's masks.
    """
    if probs.ndim == 5 and probs.shape[0] == 1:
        probs = probs[0]
    masks = case.masks.astype(bool)
    if probs.shape != masks.shape:
        raise ShapeError(f"case {case.case_id}: predictions {probs.shape} do not match masks {masks.shape}")
    pred = probs > threshold
    values = {m: {} for m in METRICS}
    for i, name in enumerate(CLASSES):
        counts = confusion(pred[i], masks[i])
        values["dice"][name] = dice(pred[i], masks[i])
        values["hd"][name] = _or_sentinel(hausdorff, pred[i], masks[i], 100)
        values["hd95"][name] = _or_sentinel(hausdorff, pred[i], masks[i], 95)
        values["sensitivity"][name] = _or_sentinel(sensitivity, counts)
        values["specificity"][name] = _or_sentinel(specificity, counts)
    return MetricReport(case_id=case.case_id, **values)


def _mean_sd(values: Sequence[float]) -> tuple[Optional[float], Optional[float]]:
    if not values:
        return None, None
    mean = math.fsum(values) / len(values)
    if len(values) == 1:
        return mean, 0.0
    return mean, math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1))


def aggregate(reports: Sequence[MetricReport]) -> dict:
    """
    Mean and sample standard deviation of every metric and class over the
    reports, skipping sentinels. `excluded` counts the skipped cases.

    :return: {metric: {class: {"mean", "sd", "n", "excluded"}}}
    """
    summary = {}
    for metric in METRICS:
        summary[metric] = {}
        for name in CLASSES:
            values = [getattr(r, metric)[name] for r in reports]
            defined = [v for v in values if v is not None]
            mean, sd = _mean_sd(defined)
            summary[metric][name] = {"mean": mean, "sd": sd, "n": len(defined),
                                     "excluded": len(values) - len(defined)}
    return summary


def fold_row(summary: dict, fold: int) -> dict:
    """
    One row of the per-fold table: class means of Dice, HD95, sensitivity
    and specificity.
    """
    row = {"fold": fold}
    for prefix, metric in (("dice", "dice"), ("hd", "hd95"), ("sens", "sensitivity"), ("spec", "specificity")):
        for name in CLASSES:
            row[f"{prefix}_{name}"] = summary[metric][name]["mean"]
    return row
