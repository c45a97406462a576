# -*- coding: utf-8 -*-

"""
Turns a raw case into network input: crop around the brain, rescale each
modality to [-1, 1], keep the four modalities stacked channel-first.
"""

from __future__ import annotations

__all__ = ['DEFAULT_CROP', 'crop_window', 'normalize_modality', 'preprocess_case', 'load_cases']

import logging
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .case import Case, read_case
from ..errors import ShapeError

logger = logging.getLogger(__name__)

DEFAULT_CROP = 128


def crop_window(reference: np.ndarray, size: int) -> tuple[slice, ...]:
    """
    A `size`-cubed window centred on the bounding box of the nonzero voxels
    of `reference`, shifted as needed to stay inside the volume. An empty
    reference centres the window on the volume.

    :raises ShapeError: if any axis is shorter than `size`
    """
    short = [(axis, e) for axis, e in enumerate(reference.shape) if e < size]
    if short:
        axis, extent = short[0]
        raise ShapeError(f"axis {axis} has extent {extent}, smaller than the crop size {size}")
    nonzero = np.nonzero(reference)
    window = []
    for axis, extent in enumerate(reference.shape):
        if nonzero[axis].size:
            centre = (int(nonzero[axis].min()) + int(nonzero[axis].max()) + 1) // 2
        else:
            centre = extent // 2
        start = min(max(centre - size // 2, 0), extent - size)
        window.append(slice(start, start + size))
    return tuple(window)


def normalize_modality(volume: np.ndarray) -> np.ndarray:
    """
    Min-max maps the nonzero voxels to [-1, 1] and sets background voxels
    to -1. A volume with a single nonzero intensity maps its foreground to 0;
    an all-zero volume stays all zero.
    """
    out = np.zeros(volume.shape, dtype=np.float32)
    foreground = volume != 0
    if not foreground.any():
        return out
    values = volume[foreground].astype(np.float64)
    lo, hi = values.min(), values.max()
    out[:] = -1.0
    if hi > lo:
        out[foreground] = (2.0 * (values - lo) / (hi - lo) - 1.0).astype(np.float32)
    else:
        out[foreground] = 0.0
    return out


def preprocess_case(case: Case, crop_size: Optional[int] = DEFAULT_CROP) -> Case:
    """
    :param case:      raw case, modalities in stored intensity units
    :param crop_size: cubic crop extent; None keeps the stored extent
    :return: a new Case whose modalities lie in [-1, 1]
    """
    if crop_size is None:
        window = tuple(slice(0, e) for e in case.shape)
    else:
        window = crop_window(case.modalities[0], crop_size)
    logger.debug("Cropping case %s to %s" % (case.case_id, [(s.start, s.stop) for s in window]))
    cropped = case.modalities[(slice(None),) + window]
    modalities = np.stack([normalize_modality(m) for m in cropped])
    return Case(case.case_id, modalities, np.ascontiguousarray(case.label[window]))


def load_cases(data_dir: Path, case_ids: Sequence[str], crop_size: Optional[int] = DEFAULT_CROP) -> list[Case]:
    """
    Reads and preprocesses the named cases from `data_dir`, in the given order.
    """
    cases = [preprocess_case(read_case(Path(data_dir) / cid), crop_size) for cid in case_ids]
    logger.info("Loaded %d cases from %s" % (len(cases), data_dir))
    return cases
