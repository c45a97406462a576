# -*- coding: utf-8 -*-

"""
Random flips shared by a case's modalities and masks.
"""

from __future__ import annotations

__all__ = ['draw_flips', 'apply_flips', 'augment_flip']

import numpy as np


def draw_flips(rng: np.random.Generator, axes: int = 3) -> tuple[bool, ...]:
    return tuple(bool(f) for f in rng.random(axes) < 0.5)


def apply_flips(volume: np.ndarray, flips: tuple[bool, ...]) -> np.ndarray:
    """
    Flips the trailing spatial axes of `volume` where `flips` is set.
    """
    spatial = volume.ndim - len(flips)
    axes = tuple(spatial + i for i, f in enumerate(flips) if f)
    if not axes:
        return volume
    return np.flip(volume, axis=axes)


def augment_flip(modalities: np.ndarray, masks: np.ndarray,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """
    Flips each spatial axis independently with probability 0.5, identically
    for `modalities` (C, D, H, W) and `masks` (K, D, H, W).
    """
    flips = draw_flips(rng)
    return (np.ascontiguousarray(apply_flips(modalities, flips)),
            np.ascontiguousarray(apply_flips(masks, flips)))
