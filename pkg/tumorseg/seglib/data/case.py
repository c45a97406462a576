# -*- coding: utf-8 -*-

"""
A subject's four modality volumes with its label volume, and the mapping
from raw labels to the nested evaluation masks.

Raw labels: 0 background, 1 necrosis / non-enhancing tumor, 2 edema,
4 enhancing tumor.
"""

from __future__ import annotations

__all__ = ['Case', 'MODALITIES', 'LABEL_VALUES', 'CLASSES', 'labels_to_masks',
           'check_labels', 'read_case', 'write_case', 'list_cases']

import dataclasses
import logging
from pathlib import Path

import numpy as np

from .volume import read_volume, write_volume
from ..errors import CaseIOError, LabelError, ShapeError, VolumeFormatError

logger = logging.getLogger(__name__)

MODALITIES = ("flair", "t1", "t1ce", "t2")
LABEL_VALUES = (0, 1, 2, 4)
CLASSES = ("wt", "tc", "et")


def check_labels(label: np.ndarray) -> None:
    """
    :raises LabelError: listing every value outside {0, 1, 2, 4}
    """
    values = np.unique(label)
    unexpected = sorted(int(v) for v in values if int(v) not in LABEL_VALUES)
    if unexpected:
        logger.error("Unexpected label values %s" % unexpected)
        raise LabelError(f"unexpected label values {unexpected}; allowed {list(LABEL_VALUES)}")


def labels_to_masks(label: np.ndarray) -> np.ndarray:
    """
    Maps a label volume to stacked binary masks (WT, TC, ET).
    WT = {1, 2, 4}, TC = {1, 4}, ET = {4}.

    :return: uint8 array of shape (3,) + label.shape
    """
    check_labels(label)
    et = label == 4
    tc = et | (label == 1)
    wt = tc | (label == 2)
    return np.stack([wt, tc, et]).astype(np.uint8)


@dataclasses.dataclass
class Case:
    """
    `modalities` is (4, D, H, W) float32 in FLAIR, T1, T1ce, T2 order;
    `label` is (D, H, W) uint8.
    """
    case_id: str
    modalities: np.ndarray
    label: np.ndarray

    def __post_init__(self):
        if self.modalities.ndim != 4 or self.modalities.shape[0] != len(MODALITIES):
            raise ShapeError(f"case {self.case_id}: modalities must be (4, D, H, W), "
                             f"received {self.modalities.shape}")
        if self.label.shape != self.modalities.shape[1:]:
            raise ShapeError(f"case {self.case_id}: label extent {self.label.shape} differs from "
                             f"modality extent {self.modalities.shape[1:]}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.label.shape

    @property
    def masks(self) -> np.ndarray:
        return labels_to_masks(self.label)


def read_case(case_dir: Path) -> Case:
    """
    Reads `<case_id>/{flair,t1,t1ce,t2,label}.avol`.

    :raises CaseIOError: if the directory or a volume is missing
    """
    case_dir = Path(case_dir)
    if not case_dir.is_dir():
        raise CaseIOError(f"case directory {case_dir} does not exist")
    volumes = []
    for name in MODALITIES + ("label",):
        path = case_dir / f"{name}.avol"
        if not path.exists():
            logger.error("Missing volume %s" % path)
            raise CaseIOError(f"case {case_dir.name}: missing {path.name}")
        volumes.append(read_volume(path))
    *modalities, label = volumes
    if any(m.shape != label.shape for m in modalities):
        raise ShapeError(f"case {case_dir.name}: volumes do not share extents")
    if label.dtype != np.uint8:
        raise VolumeFormatError("bad-dtype", f"case {case_dir.name}: label volume must be uint8")
    check_labels(label)
    return Case(case_dir.name, np.stack(modalities).astype(np.float32, copy=False), label)


def write_case(root: Path, case: Case) -> Path:
    case_dir = Path(root) / case.case_id
    for i, name in enumerate(MODALITIES):
        write_volume(case_dir / f"{name}.avol", np.ascontiguousarray(case.modalities[i], dtype=np.float32))
    write_volume(case_dir / "label.avol", case.label.astype(np.uint8, copy=False))
    logger.debug("Wrote case %s" % case_dir)
    return case_dir


def list_cases(root: Path) -> list[Path]:
    """
    Case directories under `root` in sorted order: any subdirectory holding
    a label volume.

    :raises CaseIOError: if `root` doesn't exist or holds no cases
    """
    root = Path(root)
    if not root.is_dir():
        raise CaseIOError(f"data directory {root} does not exist")
    cases = sorted(p for p in root.iterdir() if p.is_dir() and (p / "label.avol").exists())
    if not cases:
        raise CaseIOError(f"no case directories found under {root}")
    return cases
