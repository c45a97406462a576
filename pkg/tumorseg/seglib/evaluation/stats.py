# -*- coding: utf-8 -*-

"""
Paired comparisons of per-fold results between two models, and the fold
table format both models' results are exchanged in.
"""

from __future__ import annotations

__all__ = ['TTestResult', 'paired_t_test', 'cohens_d_interpret', 'pearson_corr',
           'compare_tables', 'combine_fold_tables', 'read_fold_table', 'write_fold_table', 'column_summary']

import dataclasses
import logging
import math
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import special, stats

from ..errors import CaseIOError, DegenerateError, ShapeError

logger = logging.getLogger(__name__)

# Relative to the largest difference; below this the differences are treated as constant.
_ZERO_VARIANCE = 1e-12


@dataclasses.dataclass(frozen=True)
class TTestResult:
    n: int
    mean_diff: float
    sd_diff: float
    t: float
    p: float
    cohens_d: float

    @property
    def interpretation(self) -> str:
        return cohens_d_interpret(self.cohens_d)

    def to_dict(self) -> dict:
        return {**dataclasses.asdict(self), "interpretation": self.interpretation}


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """
    Two-tailed paired t-test on d = a - b with n - 1 degrees of freedom.
    Both t and Cohen's d use the sample standard deviation of d.

    :raises ShapeError:      on unequal lengths or fewer than two pairs
    :raises DegenerateError: when the differences have zero variance
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"paired samples must be equal-length vectors, received {a.shape} and {b.shape}")
    n = a.size
    if n < 2:
        raise ShapeError(f"paired t-test needs at least 2 pairs, received {n}")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd <= _ZERO_VARIANCE * max(1.0, float(np.abs(d).max())):
        raise DegenerateError("degenerate: zero variance in paired differences")
    t = mean / (sd / math.sqrt(n))
    df = n - 1
    p = float(special.betainc(df / 2, 0.5, df / (df + t * t)))
    return TTestResult(n=n, mean_diff=mean, sd_diff=sd, t=t, p=p, cohens_d=mean / sd)


def cohens_d_interpret(d: float) -> str:
    """
    small below 0.35, medium below 0.65, large otherwise (by magnitude).
    """
    if not math.isfinite(d):
        raise ValueError(f"effect size must be finite, received {d}")
    magnitude = abs(d)
    if magnitude < 0.35:
        return "small"
    if magnitude < 0.65:
        return "medium"
    return "large"


def pearson_corr(x: Sequence[float], y: Sequence[float]) -> float:
    """
    :raises DegenerateError: if either variable is constant
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ShapeError(f"correlation needs two equal-length samples of at least 2, "
                         f"received {x.shape} and {y.shape}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DegenerateError("degenerate: zero variance in correlation input")
    return float(stats.pearsonr(x, y)[0])


def read_fold_table(path: Path) -> pd.DataFrame:
    """
    Reads a per-fold results table, one row per fold.

    :raises CaseIOError: if the file can't be read or has no numeric columns
    """
    try:
        table = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        logger.error("Unable to read fold table %s" % path)
        raise CaseIOError(f"unable to read fold table {path}: {e}") from e
    if table.empty:
        raise CaseIOError(f"fold table {path} has no rows")
    return table


def write_fold_table(path: Path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(list(rows), columns=list(columns)).to_csv(path, index=False, float_format="%.6f")
    except OSError as oe:
        raise CaseIOError(f"unable to write table {path}: {oe}") from oe


def _metric_columns(table: pd.DataFrame) -> list[str]:
    return [c for c in table.columns if c != "fold" and pd.api.types.is_numeric_dtype(table[c])]


def column_summary(table: pd.DataFrame) -> dict[str, dict[str, float]]:
    """
    Mean and sample standard deviation of every metric column.
    """
    return {c: {"mean": float(table[c].mean()), "sd": float(table[c].std(ddof=1))}
            for c in _metric_columns(table)}


def combine_fold_tables(paths: Sequence[Path]) -> pd.DataFrame:
    """
    Stacks per-fold tables (for example one written by each `eval` run)
    into a single table ordered by fold.

    :raises CaseIOError: if any table can't be read
    :raises ShapeError:  if the tables disagree on columns or repeat a fold
    """
    tables = [read_fold_table(Path(p)) for p in paths]
    if not tables:
        raise ShapeError("no fold tables given")
    columns = list(tables[0].columns)
    for path, table in zip(paths, tables):
        if list(table.columns) != columns:
            raise ShapeError(f"fold table {path} has columns {list(table.columns)}, expected {columns}")
    combined = pd.concat(tables, ignore_index=True)
    if "fold" in combined.columns:
        if combined["fold"].duplicated().any():
            repeated = sorted(combined.loc[combined["fold"].duplicated(), "fold"].tolist())
            raise ShapeError(f"fold tables repeat folds {repeated}")
        combined = combined.sort_values("fold", kind="stable").reset_index(drop=True)
    return combined


def _align_folds(a: pd.DataFrame, b: pd.DataFrame) -> tuple[pd.DataFrame, pd.DataFrame]:
    """
    Orders both tables by their `fold` column so row i of each is the same fold.
    Tables without that column are paired by position.
    """
    if "fold" not in a.columns or "fold" not in b.columns:
        return a.reset_index(drop=True), b.reset_index(drop=True)
    for name, table in (("a", a), ("b", b)):
        if table["fold"].duplicated().any():
            raise ShapeError(f"fold table {name} repeats a fold: {sorted(table['fold'].tolist())}")
    if set(a["fold"]) != set(b["fold"]):
        raise ShapeError(f"fold tables cover different folds: {sorted(a['fold'].tolist())} "
                         f"and {sorted(b['fold'].tolist())}")
    return (a.sort_values("fold").reset_index(drop=True),
            b.sort_values("fold").reset_index(drop=True))


def compare_tables(a: pd.DataFrame, b: pd.DataFrame) -> dict:
    """
    Paired t-tests between two fold tables on every metric column they
    share, pairing rows by their `fold` value.

    :raises ShapeError:      if the tables have different row counts, cover
                             different folds or share no columns
    :raises DegenerateError: naming the column whose differences are constant
    """
    if len(a) != len(b):
        raise ShapeError(f"fold tables differ in length: {len(a)} and {len(b)} rows")
    a, b = _align_folds(a, b)
    columns = [c for c in _metric_columns(a) if c in set(_metric_columns(b))]
    if not columns:
        raise ShapeError("fold tables share no metric columns")
    comparisons = {}
    for column in list(columns):
        if a[column].isna().any() or b[column].isna().any():
            logger.warning("Skipping %s: missing values" % column)
            columns.remove(column)
            continue
        try:
            comparisons[column] = paired_t_test(a[column].to_numpy(), b[column].to_numpy()).to_dict()
        except DegenerateError as de:
            raise DegenerateError(f"{column}: {de}") from de
        logger.info("%s: t=%.4f p=%.6g d=%.4f" % (column, comparisons[column]["t"],
                                                  comparisons[column]["p"], comparisons[column]["cohens_d"]))
    return {"comparisons": comparisons,
            "summary": {"a": column_summary(a[columns]), "b": column_summary(b[columns])}}
