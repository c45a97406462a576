# -*- coding: utf-8 -*-

"""
The full encoder / bottleneck / decoder segmentation network, its
initialization, and capacity accounting.
"""

from __future__ import annotations

__all__ = ['SegmentationNetwork', 'init_params', 'param_count', 'flops_estimate']

import logging
import math
from typing import Optional

import numpy as np

from . import kernels
from .blocks import EncoderBlock, DecoderBlock, stage_block
from .kernels import ConvSpec, Tensor
from .layers import Module, Conv3d, ConvTranspose3d, GroupNorm
from ..config import ModelConfig
from ..errors import ShapeError

logger = logging.getLogger(__name__)


class SegmentationNetwork(Module):
    """
    Encoder levels double the width from `base_filters`; a bottleneck of two
    residual blocks runs at the lowest resolution; each decoder level
    upsamples, gates, attends and refines; a 1x1x1 head with a per-class
    sigmoid produces overlapping class probabilities.

    The "unet" variant replaces every residual pair with a ConvBlock and
    drops both attentions from the decoder.
    """

    def __init__(self, config: ModelConfig, dtype=np.float32):
        config.validate()
        self.config = config
        widths = config.widths
        plain = config.variant == "unet"
        self.encoders = []
        in_channels = config.in_channels
        for width in widths:
            self.encoders.append(EncoderBlock(in_channels, width, dtype, plain))
            in_channels = width
        self.bottleneck = stage_block(widths[-1], config.bottleneck, plain, dtype)
        self.decoders = []
        below = config.bottleneck
        for width in reversed(widths):
            self.decoders.append(DecoderBlock(below, width, width, dtype, plain))
            below = width
        self.head = Conv3d(ConvSpec(widths[0], config.out_classes, 1), dtype)
        self._sigmoid_cache = None

    def check_input(self, x: Tensor) -> None:
        if x.ndim != 5 or x.shape[1] != self.config.in_channels:
            raise ShapeError(f"network input must be (N, {self.config.in_channels}, D, H, W), "
                             f"received {x.shape}")
        divisor = self.config.divisor
        bad = [e for e in x.shape[2:] if e % divisor]
        if bad:
            raise ShapeError(f"spatial extents {x.shape[2:]} must each be divisible by {divisor} "
                             f"(2 ** levels with levels={self.config.levels})")

    def forward(self, x: Tensor) -> Tensor:
        """
        :param x: input of shape (N, in_channels, D, H, W)
        :return: per-class probabilities of shape (N, out_classes, D, H, W)
        """
        self.check_input(x)
        skips = []
        h = x
        for encoder in self.encoders:
            skip, h = encoder.forward(h)
            skips.append(skip)
        h = self.bottleneck.forward(h)
        for decoder, skip in zip(self.decoders, reversed(skips)):
            h = decoder.forward(h, skip)
        probs, self._sigmoid_cache = kernels.activation(self.head.forward(h), "sigmoid")
        return probs

    __call__ = forward

    def backward(self, grad_probs: Tensor) -> Tensor:
        """
        Accumulates gradients into every parameter.

        :param grad_probs: gradient of the loss w.r.t. the output probabilities
        :return: gradient w.r.t. the network input
        """
        g = self.head.backward(kernels.activation_backward(grad_probs, self._sigmoid_cache))
        skip_grads = []
        for decoder in reversed(self.decoders):
            g, d_skip = decoder.backward(g)
            skip_grads.append(d_skip)
        g = self.bottleneck.backward(g)
        # skip_grads runs shallowest first, matching self.encoders
        for encoder, d_skip in zip(reversed(self.encoders), reversed(skip_grads)):
            g = encoder.backward(d_skip, g)
        return g

    def flops(self, extent: tuple[int, ...]) -> float:
        total = 0.0
        level_extent = tuple(extent)
        for encoder in self.encoders:
            total += encoder.flops(level_extent)
            level_extent = tuple(e // 2 for e in level_extent)
        total += self.bottleneck.flops(level_extent)
        for decoder in self.decoders:
            level_extent = tuple(e * 2 for e in level_extent)
            total += decoder.flops(level_extent)
        total += self.head.flops(level_extent) + 4 * self.config.out_classes * math.prod(level_extent)
        return total

    def state_dict(self) -> dict[str, Tensor]:
        return {name: p.value for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, Tensor]) -> None:
        """
        :raises ShapeError: on missing, unexpected, or mis-shaped tensors
        """
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise ShapeError(f"state mismatch: missing {missing[:5]}, unexpected {unexpected[:5]}")
        for name, p in params.items():
            if state[name].shape != p.value.shape:
                raise ShapeError(f"parameter {name}: shape {state[name].shape} != {p.value.shape}")
            p.value = np.array(state[name], dtype=p.value.dtype)
            p.grad = None


def init_params(config: ModelConfig, seed: Optional[int] = None, dtype=np.float32) -> SegmentationNetwork:
    """
    Builds a network with Glorot-uniform convolution weights, zero biases,
    and unit/zero group norm affines.

    :param config: model configuration
    :param seed:   overrides `config.seed` when given
    """
    network = SegmentationNetwork(config, dtype)
    rng = np.random.default_rng(config.seed if seed is None else seed)
    for module in network.modules():
        if isinstance(module, (Conv3d, ConvTranspose3d, GroupNorm)):
            module.reset_parameters(rng)
    logger.info("Initialized network with %d parameters" % network.parameter_count())
    return network


def param_count(config: ModelConfig) -> int:
    """
    Exact number of trainable scalars.
    """
    return SegmentationNetwork(config).parameter_count()


def flops_estimate(config: ModelConfig, extent: int | tuple[int, int, int] = 128) -> float:
    """
    Forward-pass floating point operations for one sample: 2 * k^3 * Cin * Cout
    per output voxel of each convolution, plus linear terms for biases,
    normalization, activations and elementwise products.
    """
    if isinstance(extent, int):
        extent = (extent,) * 3
    if any(e % config.divisor for e in extent):
        raise ShapeError(f"extent {extent} must be divisible by {config.divisor}")
    return SegmentationNetwork(config).flops(extent)
