# -*- coding: utf-8 -*-

"""
Configuration documents for the model, training, and data pipeline.

Each config is a dataclass that can be built from a plain dictionary
(usually parsed JSON). Unknown keys and out-of-range values raise
ConfigError before any work starts.
"""

from __future__ import annotations

__all__ = ['VARIANTS', 'ModelConfig', 'TrainConfig', 'DataConfig', 'RunConfig']

import dataclasses
import json
import logging
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigError

logger = logging.getLogger(__name__)

VARIANTS = ("attention", "unet")


def _from_dict(cls, data: Any, section: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{section}: expected an object, received {type(data).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        logger.error("Unknown keys in %s: %s" % (section, unknown))
        raise ConfigError(f"{section}: unknown keys {unknown}")
    try:
        obj = cls(**data)
    except TypeError as te:
        raise ConfigError(f"{section}: {te}") from te
    obj.validate()
    return obj


def _require_int(section: str, name: str, value: Any, minimum: int) -> None:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{section}.{name} must be an integer >= {minimum}, received {value!r}")


def _require_number(section: str, name: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{name} must be a number, received {value!r}")
    return float(value)


@dataclasses.dataclass
class ModelConfig:
    """
    Architecture hyperparameters. Encoder widths double from `base_filters`
    over `levels` stages; `bottleneck_filters` of None means
    base_filters * 2 ** levels.

    `variant` "attention" builds the gated network; "unet" drops the
    attention gates and multi-scale attention and uses plain two-convolution
    blocks, the baseline it is compared against.
    """
    in_channels: int = 4
    out_classes: int = 3
    base_filters: int = 8
    levels: int = 4
    bottleneck_filters: Optional[int] = 128
    seed: int = 0
    variant: str = "attention"

    @classmethod
    def from_dict(cls, data: dict) -> ModelConfig:
        return _from_dict(cls, data, "model")

    def validate(self) -> None:
        for name in ("in_channels", "out_classes", "base_filters", "levels"):
            _require_int("model", name, getattr(self, name), 1)
        if self.bottleneck_filters is not None:
            _require_int("model", "bottleneck_filters", self.bottleneck_filters, 1)
        _require_int("model", "seed", self.seed, 0)
        if self.variant not in VARIANTS:
            raise ConfigError(f"model.variant must be one of {list(VARIANTS)}, received {self.variant!r}")

    @property
    def widths(self) -> list[int]:
        return [self.base_filters * 2 ** i for i in range(self.levels)]

    @property
    def bottleneck(self) -> int:
        if self.bottleneck_filters is None:
            return self.base_filters * 2 ** self.levels
        return self.bottleneck_filters

    @property
    def divisor(self) -> int:
        """
        Every spatial extent fed to the network must be a multiple of this.
        """
        return 2 ** self.levels

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass
class TrainConfig:
    """
    Optimizer, scheduler, and loop settings.
    """
    lr: float = 5e-4
    patience: int = 4
    factor: float = 0.5
    threshold: float = 1e-4
    epochs: int = 200
    batch_size: int = 4
    seed: int = 0
    flip: bool = True
    smooth: float = 1.0
    min_lr: float = 0.0

    @classmethod
    def from_dict(cls, data: dict) -> TrainConfig:
        return _from_dict(cls, data, "train")

    def validate(self) -> None:
        # lr == 0 is accepted: it freezes the parameters, which is useful for checks.
        if _require_number("train", "lr", self.lr) < 0:
            raise ConfigError("train.lr must be >= 0")
        _require_int("train", "patience", self.patience, 1)
        _require_int("train", "epochs", self.epochs, 1)
        _require_int("train", "batch_size", self.batch_size, 1)
        _require_int("train", "seed", self.seed, 0)
        if not 0 < _require_number("train", "factor", self.factor) < 1:
            raise ConfigError("train.factor must lie in (0, 1)")
        if _require_number("train", "threshold", self.threshold) < 0:
            raise ConfigError("train.threshold must be >= 0")
        if _require_number("train", "smooth", self.smooth) <= 0:
            raise ConfigError("train.smooth must be > 0")
        if _require_number("train", "min_lr", self.min_lr) < 0:
            raise ConfigError("train.min_lr must be >= 0")
        if not isinstance(self.flip, bool):
            raise ConfigError("train.flip must be a boolean")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass
class DataConfig:
    """
    Where cases and the fold assignment live. `crop_size` of None keeps
    the stored extent.
    """
    dir: str = "data"
    folds: str = "folds.json"
    crop_size: Optional[int] = None

    @classmethod
    def from_dict(cls, data: dict) -> DataConfig:
        return _from_dict(cls, data, "data")

    def validate(self) -> None:
        if not isinstance(self.dir, str) or not self.dir:
            raise ConfigError("data.dir must be a non-empty path")
        if not isinstance(self.folds, str) or not self.folds:
            raise ConfigError("data.folds must be a non-empty path")
        if self.crop_size is not None:
            _require_int("data", "crop_size", self.crop_size, 1)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass
class RunConfig:
    """
    A full run: model, training and data settings together.
    """
    model: ModelConfig = dataclasses.field(default_factory=ModelConfig)
    train: TrainConfig = dataclasses.field(default_factory=TrainConfig)
    data: DataConfig = dataclasses.field(default_factory=DataConfig)

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        if not isinstance(data, dict):
            raise ConfigError("run config must be a JSON object")
        unknown = sorted(set(data) - {"model", "train", "data"})
        if unknown:
            raise ConfigError(f"run config: unknown keys {unknown}")
        config = cls(model=ModelConfig.from_dict(data.get("model", {})),
                     train=TrainConfig.from_dict(data.get("train", {})),
                     data=DataConfig.from_dict(data.get("data", {})))
        config.validate()
        return config

    @classmethod
    def from_file(cls, path: Path) -> RunConfig:
        """
        :raises ConfigError: if the file is missing, not JSON, or invalid
        """
        logger.info("Reading run config from %s" % path)
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except OSError as oe:
            raise ConfigError(f"unable to read config {path}: {oe}") from oe
        except json.JSONDecodeError as je:
            raise ConfigError(f"config {path} is not valid JSON: {je}") from je
        return cls.from_dict(data)

    def validate(self) -> None:
        self.model.validate()
        self.train.validate()
        self.data.validate()
        crop = self.data.crop_size
        if crop is not None and crop % self.model.divisor:
            raise ConfigError(f"data.crop_size {crop} must be divisible by {self.model.divisor} "
                              f"(2 ** model.levels)")

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "train": self.train.to_dict(), "data": self.data.to_dict()}
