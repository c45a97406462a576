# -*- coding: utf-8 -*-

"""
Parameter-holding layers built on the kernels in `kernels`.

A layer keeps the cache of its most recent forward call, so each layer
instance is used exactly once per forward pass. `backward` accumulates
parameter gradients and returns the gradient for the layer's input.
"""

from __future__ import annotations

__all__ = ['Module', 'Conv3d', 'ConvTranspose3d', 'GroupNorm', 'group_count']

import logging
import math
from typing import Iterator, Optional

import numpy as np

from . import kernels
from .kernels import ConvSpec, GradPair, Tensor

logger = logging.getLogger(__name__)


def group_count(channels: int) -> int:
    """
    Four groups when the channel count allows it, otherwise a single group.
    """
    return 4 if channels % 4 == 0 else 1


class Module:
    """
    Base class for anything that owns `GradPair`s or other modules.
    Parameters are discovered from instance attributes in definition order.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, GradPair]]:
        for name, attr in vars(self).items():
            if isinstance(attr, GradPair):
                yield f"{prefix}{name}", attr
            elif isinstance(attr, Module):
                yield from attr.named_parameters(f"{prefix}{name}.")
            elif isinstance(attr, list):
                for i, item in enumerate(attr):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def modules(self) -> Iterator[Module]:
        yield self
        for attr in vars(self).values():
            if isinstance(attr, Module):
                yield from attr.modules()
            elif isinstance(attr, list):
                for item in attr:
                    if isinstance(item, Module):
                        yield from item.modules()

    def parameter_count(self) -> int:
        return sum(p.value.size for _, p in self.named_parameters())

    def zero_grad(self) -> None:
        for _, p in self.named_parameters():
            p.zero_grad()

    def astype(self, dtype) -> Module:
        for _, p in self.named_parameters():
            p.value = p.value.astype(dtype)
            p.grad = None
        return self


class Conv3d(Module):
    """
    Cubic-kernel convolution layer.
    """

    def __init__(self, spec: ConvSpec, dtype=np.float32):
        self.spec = spec
        self.weight = GradPair(np.zeros(spec.weight_shape, dtype=dtype))
        self.bias = GradPair(np.zeros(spec.out_channels, dtype=dtype))
        self._cache: Optional[kernels.ConvCache] = None

    def reset_parameters(self, rng: np.random.Generator) -> None:
        receptive = self.spec.kernel ** 3
        bound = math.sqrt(6.0 / ((self.spec.in_channels + self.spec.out_channels) * receptive))
        self.weight.value = rng.uniform(-bound, bound, self.spec.weight_shape).astype(self.weight.value.dtype)
        self.bias.value = np.zeros_like(self.bias.value)

    def forward(self, x: Tensor) -> Tensor:
        out, self._cache = kernels.conv3d(x, self.weight.value, self.bias.value, self.spec)
        return out

    def backward(self, grad_out: Tensor) -> Tensor:
        dx, dw, db = kernels.conv3d_backward(grad_out, self._cache)
        self.weight.accumulate(dw)
        self.bias.accumulate(db)
        return dx

    def output_extent(self, extent: tuple[int, ...]) -> tuple[int, ...]:
        return tuple(self.spec.output_extent(e) for e in extent)

    def flops(self, extent: tuple[int, ...]) -> float:
        voxels = math.prod(self.output_extent(extent))
        s = self.spec
        return float(2 * s.kernel ** 3 * s.in_channels * s.out_channels * voxels + s.out_channels * voxels)


class ConvTranspose3d(Module):
    """
    Stride-2, kernel-2 upsampling layer.
    """

    def __init__(self, in_channels: int, out_channels: int, dtype=np.float32):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.weight = GradPair(np.zeros((in_channels, out_channels, 2, 2, 2), dtype=dtype))
        self.bias = GradPair(np.zeros(out_channels, dtype=dtype))
        self._cache: Optional[kernels.ConvTransposeCache] = None

    def reset_parameters(self, rng: np.random.Generator) -> None:
        bound = math.sqrt(6.0 / ((self.in_channels + self.out_channels) * 8))
        shape = self.weight.value.shape
        self.weight.value = rng.uniform(-bound, bound, shape).astype(self.weight.value.dtype)
        self.bias.value = np.zeros_like(self.bias.value)

    def forward(self, x: Tensor) -> Tensor:
        out, self._cache = kernels.conv_transpose3d(x, self.weight.value, self.bias.value)
        return out

    def backward(self, grad_out: Tensor) -> Tensor:
        dx, dw, db = kernels.conv_transpose3d_backward(grad_out, self._cache)
        self.weight.accumulate(dw)
        self.bias.accumulate(db)
        return dx

    def flops(self, extent: tuple[int, ...]) -> float:
        voxels = math.prod(extent)
        return float(2 * 8 * self.in_channels * self.out_channels * voxels + self.out_channels * 8 * voxels)


class GroupNorm(Module):
    """
    Group normalization with affine scale and shift.
    """

    def __init__(self, channels: int, num_groups: Optional[int] = None, eps: float = 1e-5,
                 dtype=np.float32):
        self.channels = channels
        self.num_groups = num_groups or group_count(channels)
        self.eps = eps
        self.gamma = GradPair(np.ones(channels, dtype=dtype))
        self.beta = GradPair(np.zeros(channels, dtype=dtype))
        self._cache: Optional[kernels.GroupNormCache] = None

    def reset_parameters(self, _rng: np.random.Generator) -> None:
        self.gamma.value = np.ones_like(self.gamma.value)
        self.beta.value = np.zeros_like(self.beta.value)

    def forward(self, x: Tensor) -> Tensor:
        out, self._cache = kernels.group_norm(x, self.gamma.value, self.beta.value, self.num_groups, self.eps)
        return out

    def backward(self, grad_out: Tensor) -> Tensor:
        dx, d_gamma, d_beta = kernels.group_norm_backward(grad_out, self._cache)
        self.gamma.accumulate(d_gamma)
        self.beta.accumulate(d_beta)
        return dx

    def flops(self, extent: tuple[int, ...]) -> float:
        # mean, variance, normalize, scale, shift
        return float(7 * self.channels * math.prod(extent))
