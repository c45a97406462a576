# -*- coding: utf-8 -*-

"""
Stratified cross-validation folds over tumor composition.

Each case is stratified by its tumor size tertile and its dominant
subregion. Within each stratum the cases are shuffled and dealt into ten
chunks; fold i validates on chunk 2i, tests on chunk 2i + 1 and trains on
the other eight. The deal skips through the chunks as 0, 2, 4, 6, 8, 1, 3,
5, 7, 9 so each fold's validation and test chunks sit five deals apart,
which keeps every subset within one case of its stratum's share.
"""

from __future__ import annotations

__all__ = ['CaseStats', 'case_stats', 'stratify', 'kfold_split', 'FoldAssignment',
           'correlations', 'composition', 'NUM_FOLDS', 'NUM_CHUNKS', 'SUBTYPES']

import dataclasses
import json
import logging
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .stats import pearson_corr
from ..data.case import Case, check_labels
from ..errors import CaseIOError, DegenerateError, SplitError

logger = logging.getLogger(__name__)

NUM_FOLDS = 5
NUM_CHUNKS = 2 * NUM_FOLDS
MIN_CASES = NUM_CHUNKS
SUBTYPES = ("net", "ed", "et")
_DEAL_ORDER = (0, 2, 4, 6, 8, 1, 3, 5, 7, 9)
_SUBSETS = ("train", "val", "test")


@dataclasses.dataclass(frozen=True)
class CaseStats:
    """
    Voxel counts of the necrotic / non-enhancing core (label 1), edema
    (label 2) and enhancing tumor (label 4).
    """
    case_id: str
    net: int
    ed: int
    et: int

    @property
    def size(self) -> int:
        return self.net + self.ed + self.et

    @property
    def dominant(self) -> str:
        counts = (self.net, self.ed, self.et)
        return SUBTYPES[int(np.argmax(counts))]


def case_stats(case: Case) -> CaseStats:
    check_labels(case.label)
    return CaseStats(case_id=case.case_id,
                     net=int((case.label == 1).sum()),
                     ed=int((case.label == 2).sum()),
                     et=int((case.label == 4).sum()))


def stratify(stats: Sequence[CaseStats]) -> dict[str, str]:
    """
    Labels every case "<tertile>-<subtype>", e.g. "size1-ed". Tertile
    boundaries are the 1/3 and 2/3 quantiles of tumor size; a size equal to
    a boundary falls in the lower tertile. Equal subtype counts resolve in
    the order NET, ED, ET.

    :return: case_id -> stratum label
    """
    if not stats:
        return {}
    sizes = np.array([s.size for s in stats], dtype=np.float64)
    bounds = np.quantile(sizes, [1 / 3, 2 / 3])
    tertiles = np.searchsorted(bounds, sizes, side="left")
    return {s.case_id: f"size{int(t)}-{s.dominant}" for s, t in zip(stats, tertiles)}


@dataclasses.dataclass
class FoldAssignment:
    seed: int
    strata: dict[str, str]
    folds: list[dict[str, list[str]]]
    correlations: Optional[dict[str, Optional[float]]] = None
    composition: Optional[list[dict]] = None

    @property
    def case_ids(self) -> list[str]:
        return sorted(self.strata)

    def fold(self, index: int) -> dict[str, list[str]]:
        if not 0 <= index < len(self.folds):
            raise SplitError(f"fold {index} out of range; assignment has {len(self.folds)} folds")
        return self.folds[index]

    def check_partition(self) -> None:
        """
        :raises SplitError: unless every fold partitions the case set
        """
        everything = set(self.strata)
        for i, fold in enumerate(self.folds):
            subsets = [set(fold[name]) for name in _SUBSETS]
            if sum(len(s) for s in subsets) != len(everything) or set().union(*subsets) != everything:
                raise SplitError(f"fold {i} does not partition the case set")

    def to_dict(self) -> dict:
        data = {"seed": self.seed, "strata": dict(sorted(self.strata.items())), "folds": self.folds}
        if self.correlations is not None:
            data["correlations"] = self.correlations
        if self.composition is not None:
            data["composition"] = self.composition
        return data

    @classmethod
    def from_dict(cls, data: Mapping) -> FoldAssignment:
        try:
            assignment = cls(seed=int(data["seed"]), strata=dict(data["strata"]),
                             folds=[{name: list(f[name]) for name in _SUBSETS} for f in data["folds"]],
                             correlations=data.get("correlations"), composition=data.get("composition"))
        except (KeyError, TypeError, ValueError) as e:
            raise SplitError(f"malformed fold assignment: {e}") from e
        assignment.check_partition()
        return assignment

    def save(self, path: Path) -> None:
        try:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8") as f:
                json.dump(self.to_dict(), f, indent=2)
                f.write("\n")
        except OSError as oe:
            raise CaseIOError(f"unable to write fold assignment {path}: {oe}") from oe
        logger.info("Wrote fold assignment to %s" % path)

    @classmethod
    def load(cls, path: Path) -> FoldAssignment:
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except OSError as oe:
            raise CaseIOError(f"unable to read fold assignment {path}: {oe}") from oe
        except json.JSONDecodeError as je:
            raise SplitError(f"fold assignment {path} is not valid JSON: {je}") from je
        return cls.from_dict(data)


def kfold_split(strata: Mapping[str, str], seed: int) -> FoldAssignment:
    """
    :param strata: case_id -> stratum label, as produced by `stratify`
    :raises SplitError: with fewer than ten cases
    """
    if len(strata) < MIN_CASES:
        logger.error("Only %d cases available for splitting" % len(strata))
        raise SplitError(f"at least {MIN_CASES} cases are required for {NUM_FOLDS} folds, received {len(strata)}")
    rng = np.random.default_rng(seed)
    chunks = [[] for _ in range(NUM_CHUNKS)]
    deal = 0
    for label in sorted(set(strata.values())):
        members = sorted(cid for cid, lab in strata.items() if lab == label)
        for i in rng.permutation(len(members)):
            chunks[_DEAL_ORDER[deal % NUM_CHUNKS]].append(members[i])
            deal += 1
    folds = []
    for i in range(NUM_FOLDS):
        val, test = chunks[2 * i], chunks[2 * i + 1]
        train = [cid for j, chunk in enumerate(chunks) if j not in (2 * i, 2 * i + 1) for cid in chunk]
        folds.append({"train": sorted(train), "val": sorted(val), "test": sorted(test)})
    logger.info("Split %d cases in %d strata into %d folds" % (len(strata), len(set(strata.values())), NUM_FOLDS))
    return FoldAssignment(seed=seed, strata=dict(strata), folds=folds)


def correlations(stats: Sequence[CaseStats]) -> dict[str, Optional[float]]:
    """
    Pearson correlation of each subregion's voxel count with tumor size;
    None where either variable has no variance.
    """
    sizes = [s.size for s in stats]
    result = {}
    for name in SUBTYPES:
        try:
            result[name] = pearson_corr([getattr(s, name) for s in stats], sizes)
        except (DegenerateError, ValueError):
            result[name] = None
    return result


def composition(assignment: FoldAssignment, stats: Sequence[CaseStats]) -> list[dict]:
    """
    Per fold and subset, the number of cases and their summed voxel counts.
    """
    by_id = {s.case_id: s for s in stats}
    report = []
    for fold in assignment.folds:
        entry = {}
        for name in _SUBSETS:
            members = [by_id[cid] for cid in fold[name]]
            entry[name] = {"cases": len(members), **{t: sum(getattr(s, t) for s in members) for t in SUBTYPES}}
        report.append(entry)
    return report
