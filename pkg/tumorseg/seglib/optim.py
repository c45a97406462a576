# -*- coding: utf-8 -*-

"""
Training loss, the Adam optimizer, and the plateau learning rate scheduler.
"""

from __future__ import annotations

__all__ = ['soft_dice_loss', 'AdamState', 'adam_step', 'Adam', 'PlateauScheduler']

import dataclasses
import logging
import math
from typing import Iterable

import numpy as np

from .errors import ShapeError
from .nn.kernels import GradPair, Tensor

logger = logging.getLogger(__name__)


def soft_dice_loss(pred: Tensor, target: Tensor, smooth: float = 1.0) -> tuple[float, Tensor]:
    """
    Multi-label soft Dice loss, averaged over classes (axis 1). Sums run over
    the batch and every voxel of a class.

    loss = 1 - mean_c (2 * sum(p * t) + smooth) / (sum(p) + sum(t) + smooth)

    :param pred:   probabilities in (0, 1), shape (N, C, ...)
    :param target: binary masks, same shape
    :return: (loss, gradient of the loss w.r.t. pred)
    """
    if pred.shape != target.shape:
        raise ShapeError(f"soft_dice_loss: prediction {pred.shape} and target {target.shape} differ")
    classes = pred.shape[1]
    axes = (0,) + tuple(range(2, pred.ndim))
    target = target.astype(pred.dtype, copy=False)
    intersection = (pred * target).sum(axis=axes)
    denominator = pred.sum(axis=axes) + target.sum(axis=axes) + smooth
    numerator = 2 * intersection + smooth
    loss = 1.0 - float((numerator / denominator).mean())

    shape = (1, classes) + (1,) * (pred.ndim - 2)
    grad = -(2 * target * denominator.reshape(shape) - numerator.reshape(shape)) / (
            classes * denominator.reshape(shape) ** 2)
    return loss, grad.astype(pred.dtype, copy=False)


@dataclasses.dataclass
class AdamState:
    """
    First and second moment estimates for one parameter.
    """
    m: Tensor
    v: Tensor


def adam_step(value: Tensor, grad: Tensor, state: AdamState, lr: float, t: int,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> Tensor:
    """
    One bias-corrected Adam update; moments in `state` are updated in place.

    :param t: 1-based step number
    :return: the updated parameter value
    """
    if t < 1:
        raise ValueError("Adam step number must be >= 1")
    if grad.shape != value.shape or state.m.shape != value.shape or state.v.shape != value.shape:
        raise ShapeError(f"Adam: shape drift between parameter {value.shape}, gradient {grad.shape} "
                         f"and state {state.m.shape}")
    state.m *= beta1
    state.m += (1 - beta1) * grad
    state.v *= beta2
    state.v += (1 - beta2) * grad * grad
    m_hat = state.m / (1 - beta1 ** t)
    v_hat = state.v / (1 - beta2 ** t)
    return value - lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    """
    Adam over a fixed, ordered set of named parameters.
    """

    def __init__(self, params: Iterable[tuple[str, GradPair]], lr: float,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.state = {name: AdamState(np.zeros_like(p.value), np.zeros_like(p.value))
                      for name, p in self.params}

    def step(self) -> None:
        self.t += 1
        for name, p in self.params:
            if p.grad is None:
                continue
            p.value = adam_step(p.value, p.grad, self.state[name], self.lr, self.t,
                                self.betas[0], self.betas[1], self.eps).astype(p.value.dtype, copy=False)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.zero_grad()


class PlateauScheduler:
    """
    Multiplies the learning rate by `factor` once the monitored loss has gone
    `patience` epochs without improving on the best value by more than
    `threshold` (relative). The epoch that set the best value counts as the
    first of the stagnant window, so patience=4 decays on the fifth flat epoch.
    """

    def __init__(self, lr: float, patience: int = 4, factor: float = 0.5,
                 threshold: float = 1e-4, min_lr: float = 0.0):
        self.lr = lr
        self.patience = patience
        self.factor = factor
        self.threshold = threshold
        self.min_lr = min_lr
        self.best = math.inf
        self.num_bad_epochs = 0

    def _improved(self, loss: float) -> bool:
        if math.isinf(self.best):
            return True
        return loss < self.best - abs(self.best) * self.threshold

    def update(self, loss: float) -> float:
        """
        :param loss: this epoch's validation loss
        :return: the learning rate to use next
        """
        if not math.isfinite(loss):
            raise ValueError(f"scheduler received a non-finite loss: {loss}")
        if self._improved(loss):
            self.best = loss
            self.num_bad_epochs = 0
            return self.lr
        self.num_bad_epochs += 1
        if self.num_bad_epochs >= self.patience:
            new_lr = max(self.lr * self.factor, self.min_lr)
            if new_lr < self.lr:
                logger.info("Reducing learning rate from %.3e to %.3e" % (self.lr, new_lr))
            self.lr = new_lr
            self.num_bad_epochs = 0
        return self.lr
