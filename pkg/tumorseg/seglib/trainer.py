# -*- coding: utf-8 -*-

"""
The training loop: seeded batches, flip augmentation, soft Dice loss,
Adam with plateau decay, per-epoch validation and best-checkpoint
selection by mean validation Dice.

Random streams are split from the training seed with SeedSequence so that
data order and augmentation are independent of each other; parameter
initialization uses the model config's own seed.
"""

from __future__ import annotations

__all__ = ['HistoryEntry', 'TrainHistory', 'TrainResult', 'train', 'predict', 'make_batch',
           'HISTORY_COLUMNS']

import dataclasses
import logging
import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .checkpoint import save_checkpoint
from .config import ModelConfig, TrainConfig
from .data.augment import augment_flip
from .data.case import CLASSES, Case
from .errors import CaseIOError, NumericError, UsageError
from .evaluation.metrics import DEFAULT_THRESHOLD, dice
from .events import CheckpointSaved, EpochCompleted, LearningRateReduced
from .nn.network import SegmentationNetwork, init_params
from .optim import Adam, PlateauScheduler, soft_dice_loss

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "train_loss", "val_loss", "lr", "dice_wt", "dice_tc", "dice_et")


@dataclasses.dataclass(frozen=True)
class HistoryEntry:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    dice_wt: float
    dice_tc: float
    dice_et: float

    @property
    def mean_dice(self) -> float:
        return (self.dice_wt + self.dice_tc + self.dice_et) / 3


@dataclasses.dataclass
class TrainHistory:
    """
    One entry per completed epoch. `lr` is the rate used during the epoch.
    """
    entries: list[HistoryEntry] = dataclasses.field(default_factory=list)

    def append(self, entry: HistoryEntry) -> None:
        if entry.epoch != len(self.entries) + 1:
            raise ValueError(f"history expected epoch {len(self.entries) + 1}, received {entry.epoch}")
        self.entries.append(entry)

    def __len__(self) -> int:
        return len(self.entries)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([dataclasses.asdict(e) for e in self.entries], columns=list(HISTORY_COLUMNS))

    def save(self, path: Path) -> None:
        try:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            self.to_frame().to_csv(path, index=False, float_format="%.6f")
        except OSError as oe:
            raise CaseIOError(f"unable to write history {path}: {oe}") from oe
        logger.info("Wrote training history to %s" % path)

    @classmethod
    def load(cls, path: Path) -> TrainHistory:
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise CaseIOError(f"unable to read history {path}: {e}") from e
        history = cls()
        for row in frame.to_dict("records"):
            history.append(HistoryEntry(**{k: (int(v) if k == "epoch" else float(v)) for k, v in row.items()}))
        return history


@dataclasses.dataclass
class TrainResult:
    network: SegmentationNetwork
    history: TrainHistory
    best_epoch: int
    best_dice: float


def make_batch(cases: Sequence[Case], rng: Optional[np.random.Generator] = None,
               dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
    """
    Stacks cases into (N, 4, D, H, W) inputs and (N, 3, D, H, W) targets,
    flipping each sample when `rng` is given.
    """
    inputs, targets = [], []
    for case in cases:
        x, y = case.modalities, case.masks
        if rng is not None:
            x, y = augment_flip(x, y, rng)
        inputs.append(x)
        targets.append(y)
    return np.stack(inputs).astype(dtype, copy=False), np.stack(targets).astype(dtype, copy=False)


def predict(network: SegmentationNetwork, cases: Sequence[Case], batch_size: int = 1) -> list[np.ndarray]:
    """
    :return: per-case probabilities of shape (3, D, H, W)
    """
    dtype = network.head.weight.value.dtype
    out = []
    for start in range(0, len(cases), batch_size):
        x, _ = make_batch(cases[start:start + batch_size], dtype=dtype)
        out.extend(network.forward(x))
    return out


def _validate(network: SegmentationNetwork, cases: Sequence[Case], batch_size: int,
              smooth: float) -> tuple[float, dict[str, float]]:
    dtype = network.head.weight.value.dtype
    losses, scores = [], {name: [] for name in CLASSES}
    for start in range(0, len(cases), batch_size):
        batch = cases[start:start + batch_size]
        x, y = make_batch(batch, dtype=dtype)
        probs = network.forward(x)
        loss, _ = soft_dice_loss(probs, y, smooth)
        losses.append(loss)
        pred = probs > DEFAULT_THRESHOLD
        for n in range(len(batch)):
            for i, name in enumerate(CLASSES):
                scores[name].append(dice(pred[n, i], y[n, i]))
    return math.fsum(losses) / len(losses), {name: math.fsum(v) / len(v) for name, v in scores.items()}


def _snapshot(network: SegmentationNetwork) -> dict[str, np.ndarray]:
    return {name: value.copy() for name, value in network.state_dict().items()}


def train(model_config: ModelConfig, train_config: TrainConfig, train_cases: Sequence[Case],
          val_cases: Sequence[Case], out_dir: Optional[Path] = None, meta: Optional[dict] = None,
          dtype=np.float32) -> TrainResult:
    """
    Trains a freshly initialized network.

    :param out_dir: when given, receives the best checkpoint and `history.csv`
    :param meta:    extra JSON-serializable fields for the checkpoint manifest
    :return: the network restored to its best validation epoch, with the history
    :raises NumericError: on a non-finite training loss, naming the batch
    """
    model_config.validate()
    train_config.validate()
    if not train_cases:
        raise UsageError("training requires at least one case")
    if not val_cases:
        logger.warning("No validation cases; validating on the training cases")
        val_cases = train_cases

    network = init_params(model_config, dtype=dtype)
    for case in list(train_cases[:1]) + list(val_cases[:1]):
        network.check_input(case.modalities[np.newaxis])
    order_seq, augment_seq = np.random.SeedSequence(train_config.seed).spawn(2)
    order_rng = np.random.default_rng(order_seq)
    augment_rng = np.random.default_rng(augment_seq) if train_config.flip else None

    optimizer = Adam(network.named_parameters(), train_config.lr)
    scheduler = PlateauScheduler(train_config.lr, train_config.patience, train_config.factor,
                                 train_config.threshold, train_config.min_lr)
    history = TrainHistory()
    best_dice, best_epoch, best_state = -math.inf, 0, _snapshot(network)
    checkpoint_dir = Path(out_dir) if out_dir is not None else None

    for epoch in range(1, train_config.epochs + 1):
        order = order_rng.permutation(len(train_cases))
        losses = []
        for b, start in enumerate(range(0, len(order), train_config.batch_size)):
            batch = [train_cases[i] for i in order[start:start + train_config.batch_size]]
            x, y = make_batch(batch, augment_rng, dtype)
            optimizer.zero_grad()
            probs = network.forward(x)
            loss, grad = soft_dice_loss(probs, y, train_config.smooth)
            if not math.isfinite(loss):
                ids = [c.case_id for c in batch]
                logger.error("Non-finite loss at epoch %d batch %d" % (epoch, b))
                raise NumericError(f"non-finite loss {loss} at epoch {epoch}, batch {b} (cases {ids})")
            network.backward(grad)
            optimizer.step()
            losses.append(loss)
            logger.debug("epoch %d batch %d loss %.6f" % (epoch, b, loss))

        val_loss, val_dice = _validate(network, val_cases, train_config.batch_size, train_config.smooth)
        entry = HistoryEntry(epoch=epoch, train_loss=math.fsum(losses) / len(losses), val_loss=val_loss,
                             lr=optimizer.lr, dice_wt=val_dice["wt"], dice_tc=val_dice["tc"],
                             dice_et=val_dice["et"])
        history.append(entry)
        logger.info("Epoch %d: train %.6f val %.6f dice %.4f/%.4f/%.4f lr %.3e"
                    % (epoch, entry.train_loss, val_loss, entry.dice_wt, entry.dice_tc, entry.dice_et, entry.lr))

        if entry.mean_dice > best_dice:
            best_dice, best_epoch, best_state = entry.mean_dice, epoch, _snapshot(network)
            if checkpoint_dir is not None:
                save_checkpoint(checkpoint_dir, network,
                                {**(meta or {}), "epoch": epoch, "mean_val_dice": round(best_dice, 6)})
                CheckpointSaved(epoch, checkpoint_dir, best_dice)

        old_lr = scheduler.lr
        new_lr = scheduler.update(val_loss)
        if new_lr < old_lr:
            LearningRateReduced(epoch, old_lr, new_lr)
        optimizer.lr = new_lr
        EpochCompleted(entry)

    if out_dir is not None:
        history.save(Path(out_dir) / "history.csv")
    network.load_state_dict(best_state)
    return TrainResult(network=network, history=history, best_epoch=best_epoch, best_dice=best_dice)
