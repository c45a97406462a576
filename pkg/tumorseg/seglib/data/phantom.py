# -*- coding: utf-8 -*-

"""
Synthetic nested-tumor cases.

A phantom is a cubic volume holding an ellipsoidal "brain" of tissue
intensity on a zero background, with three concentric ellipsoids inside
it: the whole tumor (edema shell, label 2), the tumor core (necrotic
shell, label 1) and the enhancing core (label 4). Every class has its own
intensity in each modality, and Gaussian noise is added inside the head.
"""

from __future__ import annotations

__all__ = ['PhantomSpec', 'DEFAULT_INTENSITIES', 'gen_phantom', 'ellipsoid_mask']

import dataclasses
import logging
from typing import Optional, Sequence, Union

import numpy as np

from .case import Case, MODALITIES
from ..errors import ConfigError

logger = logging.getLogger(__name__)

# Per-modality intensities for (tissue, edema, necrosis, enhancing).
DEFAULT_INTENSITIES = {
    "flair": (0.4, 0.9, 0.6, 0.7),
    "t1": (0.5, 0.4, 0.2, 0.3),
    "t1ce": (0.5, 0.45, 0.25, 1.0),
    "t2": (0.4, 0.85, 0.7, 0.6),
}


@dataclasses.dataclass
class PhantomSpec:
    """
    Ranges are fractions of `size`. Radii are drawn independently per axis
    from their range; the three tumor ellipsoids share one centre.
    """
    size: int = 32
    centre: tuple[float, float] = (0.4, 0.6)
    wt_radii: tuple[float, float] = (0.24, 0.32)
    tc_radii: tuple[float, float] = (0.16, 0.20)
    et_radii: tuple[float, float] = (0.11, 0.14)
    brain_radius: float = 0.45
    intensities: dict = dataclasses.field(default_factory=lambda: dict(DEFAULT_INTENSITIES))
    noise: float = 0.05

    def validate(self) -> None:
        if self.size < 4:
            raise ConfigError(f"phantom size must be >= 4, received {self.size}")
        for name in ("centre", "wt_radii", "tc_radii", "et_radii"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi < 1:
                raise ConfigError(f"phantom {name} must satisfy 0 < low <= high < 1, received {(lo, hi)}")
        if not (self.et_radii[1] < self.tc_radii[0] and self.tc_radii[1] < self.wt_radii[0]):
            raise ConfigError("phantom radii must nest: enhancing < core < whole tumor on every axis")
        if self.noise < 0:
            raise ConfigError("phantom noise must be >= 0")
        if set(self.intensities) != set(MODALITIES):
            raise ConfigError(f"phantom intensities must name exactly {list(MODALITIES)}")


def ellipsoid_mask(shape: tuple[int, ...], centre: np.ndarray, radii: np.ndarray) -> np.ndarray:
    grid = np.indices(shape, dtype=np.float64)
    offsets = (grid - centre.reshape(-1, 1, 1, 1)) / radii.reshape(-1, 1, 1, 1)
    return (offsets ** 2).sum(axis=0) <= 1.0


def gen_phantom(spec: PhantomSpec, seed: Union[int, Sequence[int]], case_id: Optional[str] = None) -> Case:
    """
    Deterministic for a given (spec, seed). `seed` is anything
    `numpy.random.default_rng` accepts as entropy.

    :raises ConfigError: if the spec's radii don't nest
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    size = spec.size
    shape = (size,) * 3
    centre = rng.uniform(*spec.centre, size=3) * size
    radii = {name: rng.uniform(*getattr(spec, f"{name}_radii"), size=3) * size
             for name in ("wt", "tc", "et")}

    brain = ellipsoid_mask(shape, np.full(3, size / 2), np.full(3, spec.brain_radius * size))
    wt = ellipsoid_mask(shape, centre, radii["wt"])
    tc = ellipsoid_mask(shape, centre, radii["tc"]) & wt
    et = ellipsoid_mask(shape, centre, radii["et"]) & tc

    label = np.zeros(shape, dtype=np.uint8)
    label[wt] = 2
    label[tc] = 1
    label[et] = 4

    head = brain | wt
    modalities = np.zeros((len(MODALITIES),) + shape, dtype=np.float32)
    for i, name in enumerate(MODALITIES):
        tissue, edema, necrosis, enhancing = spec.intensities[name]
        volume = np.zeros(shape, dtype=np.float64)
        volume[brain] = tissue
        volume[label == 2] = edema
        volume[label == 1] = necrosis
        volume[label == 4] = enhancing
        if spec.noise > 0:
            volume += rng.normal(0.0, spec.noise, size=shape)
        volume = np.where(head, np.maximum(volume, 1e-3), 0.0)
        modalities[i] = volume
    case_id = case_id or f"phantom-{seed}"
    logger.debug("Generated %s: centre %s, whole tumor radii %s" % (case_id, centre.round(2), radii["wt"].round(2)))
    return Case(case_id, modalities, label)
