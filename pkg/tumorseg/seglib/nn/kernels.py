# -*- coding: utf-8 -*-

"""
Differentiable numeric kernels for volumetric networks.

Tensors are plain `numpy.ndarray`s in C order, laid out as (N, C, D, H, W).
Every forward kernel returns its output together with a cache object; the
matching backward kernel consumes that cache and returns exact adjoints.
Reductions always run in the same order (kernel offsets ascending, channels
summed inside each offset), so identical inputs give identical outputs.
"""

from __future__ import annotations

__all__ = ['Tensor', 'ConvSpec', 'GradPair',
           'conv3d', 'conv3d_backward',
           'conv_transpose3d', 'conv_transpose3d_backward',
           'maxpool3d', 'maxpool3d_backward',
           'group_norm', 'group_norm_backward',
           'activation', 'activation_backward',
           'elementwise', 'elementwise_backward',
           'concat_channels', 'concat_channels_backward']

import dataclasses
import itertools
import logging
from typing import Optional

import numpy as np
from scipy.special import expit

from ..errors import ShapeError, MissingCacheError

logger = logging.getLogger(__name__)

Tensor = np.ndarray

_AXES = ("D", "H", "W")


@dataclasses.dataclass(frozen=True)
class ConvSpec:
    """
    Geometry of a cubic-kernel 3D convolution.
    """
    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.kernel, self.stride) < 1 or self.padding < 0:
            raise ShapeError(f"Invalid convolution geometry: {self}")

    def output_extent(self, extent: int) -> int:
        return (extent + 2 * self.padding - self.kernel) // self.stride + 1

    @property
    def weight_shape(self) -> tuple[int, ...]:
        return (self.out_channels, self.in_channels) + (self.kernel,) * 3


@dataclasses.dataclass
class GradPair:
    """
    A trainable tensor and the gradient accumulated for it.
    """
    value: Tensor
    grad: Optional[Tensor] = None

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, grad: Tensor) -> None:
        if grad.shape != self.value.shape:
            raise ShapeError(f"Gradient shape {grad.shape} does not match value shape {self.value.shape}")
        if self.grad is None:
            self.grad = grad.astype(self.value.dtype, copy=True)
        else:
            self.grad += grad


@dataclasses.dataclass
class ConvCache:
    x: Tensor
    weight: Tensor
    spec: ConvSpec
    out_shape: tuple[int, ...]


@dataclasses.dataclass
class ConvTransposeCache:
    x: Tensor
    weight: Tensor


@dataclasses.dataclass
class MaxPoolCache:
    """
    `argmax` holds, per output voxel, the linear index (within its
    sample/channel spatial volume) of the input voxel that won the window.
    """
    input_shape: tuple[int, ...]
    argmax: Tensor


@dataclasses.dataclass
class GroupNormCache:
    x_hat: Tensor
    inv_std: Tensor
    gamma: Tensor
    num_groups: int


@dataclasses.dataclass
class ActivationCache:
    kind: str
    x: Tensor
    out: Tensor


@dataclasses.dataclass
class ElementwiseCache:
    op: str
    a: Tensor
    b: Tensor
    broadcast: bool


@dataclasses.dataclass
class ConcatCache:
    split: int


def _require(cache, kind):
    if cache is None:
        logger.error("Backward pass requested without a forward cache.")
        raise MissingCacheError("missing forward cache: run the forward pass first")
    if not isinstance(cache, kind):
        raise MissingCacheError(f"expected a {kind.__name__}, received {type(cache).__name__}")
    return cache


def _check_5d(x: Tensor, name: str) -> None:
    if x.ndim != 5:
        raise ShapeError(f"{name} must be 5-dimensional (N, C, D, H, W), received shape {x.shape}")


def _taps(offset: int, extent: int, stride: int) -> slice:
    return slice(offset, offset + stride * (extent - 1) + 1, stride)


def _pad(x: Tensor, padding: int) -> Tensor:
    if padding == 0:
        return x
    return np.pad(x, [(0, 0), (0, 0)] + [(padding, padding)] * 3)


def conv3d(x: Tensor, weight: Tensor, bias: Tensor, spec: ConvSpec) -> tuple[Tensor, ConvCache]:
    """
    Zero-padded 3D cross-correlation.

    out[n, co, p] = bias[co] + sum over (offset, ci) of
                    weight[co, ci, offset] * x[n, ci, stride * p + offset - padding]

    Kernel offsets kz, ky, kx are the outer loop and each offset adds one
    BLAS contraction over input channels, so float32 sums are reproducible
    run to run on one machine but are not accumulated in ci-major order.

    :param x:      input of shape (N, Cin, D, H, W)
    :param weight: kernels of shape (Cout, Cin, k, k, k)
    :param bias:   bias of shape (Cout,)
    :param spec:   convolution geometry
    :raises ShapeError: naming the offending axis on any mismatch
    :return: output of shape (N, Cout, D', H', W') and the backward cache
    """
    _check_5d(x, "conv3d input")
    if x.shape[1] != spec.in_channels:
        raise ShapeError(f"conv3d input axis C has {x.shape[1]} channels, spec expects {spec.in_channels}")
    if weight.shape != spec.weight_shape:
        raise ShapeError(f"conv3d weight shape {weight.shape} does not match spec {spec.weight_shape}")
    if bias.shape != (spec.out_channels,):
        raise ShapeError(f"conv3d bias shape {bias.shape} does not match ({spec.out_channels},)")
    out_ext = tuple(spec.output_extent(e) for e in x.shape[2:])
    for axis, extent in zip(_AXES, out_ext):
        if extent < 1:
            raise ShapeError(f"conv3d output extent along axis {axis} would be {extent}")

    k, s = spec.kernel, spec.stride
    x_t = _pad(x, spec.padding).transpose(1, 0, 2, 3, 4)
    out_t = np.zeros((spec.out_channels, x.shape[0]) + out_ext, dtype=x.dtype)
    for kz, ky, kx in itertools.product(range(k), repeat=3):
        window = x_t[:, :, _taps(kz, out_ext[0], s), _taps(ky, out_ext[1], s), _taps(kx, out_ext[2], s)]
        out_t += np.tensordot(weight[:, :, kz, ky, kx], window, axes=([1], [0]))
    out_t += bias.reshape(-1, 1, 1, 1, 1)
    out = np.ascontiguousarray(out_t.transpose(1, 0, 2, 3, 4))
    return out, ConvCache(x, weight, spec, out.shape)


def conv3d_backward(grad_out: Tensor, cache: ConvCache) -> tuple[Tensor, Tensor, Tensor]:
    """
    Adjoint of `conv3d`.

    :param grad_out: upstream gradient, shaped like the forward output
    :param cache:    cache returned by `conv3d`
    :return: (grad_input, grad_weight, grad_bias)
    """
    cache = _require(cache, ConvCache)
    if grad_out.shape != cache.out_shape:
        raise ShapeError(f"conv3d grad_out shape {grad_out.shape} does not match output {cache.out_shape}")

    spec, weight = cache.spec, cache.weight
    k, s, p = spec.kernel, spec.stride, spec.padding
    out_ext = grad_out.shape[2:]
    x_t = _pad(cache.x, p).transpose(1, 0, 2, 3, 4)
    g_t = np.ascontiguousarray(grad_out.transpose(1, 0, 2, 3, 4))
    dx_t = np.zeros(x_t.shape, dtype=grad_out.dtype)
    dw = np.zeros_like(weight)
    for kz, ky, kx in itertools.product(range(k), repeat=3):
        taps = (slice(None), slice(None),
                _taps(kz, out_ext[0], s), _taps(ky, out_ext[1], s), _taps(kx, out_ext[2], s))
        dw[:, :, kz, ky, kx] = np.tensordot(g_t, x_t[taps], axes=([1, 2, 3, 4], [1, 2, 3, 4]))
        dx_t[taps] += np.tensordot(weight[:, :, kz, ky, kx], g_t, axes=([0], [0]))
    db = g_t.sum(axis=(1, 2, 3, 4))

    dx = dx_t.transpose(1, 0, 2, 3, 4)
    if p:
        dx = dx[:, :, p:-p, p:-p, p:-p]
    return np.ascontiguousarray(dx), dw, db


def conv_transpose3d(x: Tensor, weight: Tensor, bias: Tensor,
                     stride: int = 2, kernel: int = 2) -> tuple[Tensor, ConvTransposeCache]:
    """
    Stride-2, kernel-2 transposed convolution; doubles every spatial extent.
    Each input voxel scatters `x[n, ci] * weight[ci, co]` into its own
    disjoint 2x2x2 output block.

    :param x:      input of shape (N, Cin, D, H, W)
    :param weight: kernels of shape (Cin, Cout, 2, 2, 2)
    :param bias:   bias of shape (Cout,)
    :raises ShapeError: for any other stride/kernel or mismatched shapes
    """
    if stride != 2 or kernel != 2:
        raise ShapeError(f"conv_transpose3d supports stride=2, kernel=2 only (received {stride}, {kernel})")
    _check_5d(x, "conv_transpose3d input")
    if weight.ndim != 5 or weight.shape[0] != x.shape[1] or weight.shape[2:] != (2, 2, 2):
        raise ShapeError(f"conv_transpose3d weight shape {weight.shape} incompatible with input {x.shape}")
    if bias.shape != (weight.shape[1],):
        raise ShapeError(f"conv_transpose3d bias shape {bias.shape} does not match ({weight.shape[1]},)")

    n, _, d, h, w = x.shape
    c_out = weight.shape[1]
    # (N, D, H, W, Cout, 2, 2, 2) -> (N, Cout, D, 2, H, 2, W, 2)
    blocks = np.tensordot(x, weight, axes=([1], [0])).transpose(0, 4, 1, 5, 2, 6, 3, 7)
    out = blocks.reshape(n, c_out, 2 * d, 2 * h, 2 * w) + bias.reshape(1, -1, 1, 1, 1)
    return np.ascontiguousarray(out), ConvTransposeCache(x, weight)


def conv_transpose3d_backward(grad_out: Tensor, cache: ConvTransposeCache) -> tuple[Tensor, Tensor, Tensor]:
    """
    Adjoint of `conv_transpose3d`.

    :return: (grad_input, grad_weight, grad_bias)
    """
    cache = _require(cache, ConvTransposeCache)
    n, _, d, h, w = cache.x.shape
    c_out = cache.weight.shape[1]
    if grad_out.shape != (n, c_out, 2 * d, 2 * h, 2 * w):
        raise ShapeError(f"conv_transpose3d grad_out shape {grad_out.shape} does not match forward output")

    blocks = grad_out.reshape(n, c_out, d, 2, h, 2, w, 2).transpose(0, 2, 4, 6, 1, 3, 5, 7)
    dx = np.tensordot(blocks, cache.weight, axes=([4, 5, 6, 7], [1, 2, 3, 4])).transpose(0, 4, 1, 2, 3)
    dw = np.tensordot(cache.x, blocks, axes=([0, 2, 3, 4], [0, 1, 2, 3]))
    db = grad_out.sum(axis=(0, 2, 3, 4))
    return np.ascontiguousarray(dx), dw, db


def maxpool3d(x: Tensor, kernel: int = 2, stride: int = 2) -> tuple[Tensor, MaxPoolCache]:
    """
    Max over disjoint 2x2x2 windows. Ties go to the lowest linear index.

    :raises ShapeError: on odd spatial extents or unsupported window
    :return: pooled output and a cache whose `argmax` maps each output
             voxel to the linear index of its winning input voxel
    """
    if kernel != 2 or stride != 2:
        raise ShapeError(f"maxpool3d supports kernel=2, stride=2 only (received {kernel}, {stride})")
    _check_5d(x, "maxpool3d input")
    for axis, extent in zip(_AXES, x.shape[2:]):
        if extent % 2:
            raise ShapeError(f"maxpool3d requires even extents, axis {axis} has {extent}")

    n, c, d, h, w = x.shape
    windows = x.reshape(n, c, d // 2, 2, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 6, 3, 5, 7)
    windows = windows.reshape(n, c, d // 2, h // 2, w // 2, 8)
    local = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, local[..., None], axis=-1)[..., 0]

    iz, iy, ix = np.meshgrid(np.arange(d // 2), np.arange(h // 2), np.arange(w // 2), indexing="ij")
    z = 2 * iz + local // 4
    y = 2 * iy + (local // 2) % 2
    xx = 2 * ix + local % 2
    argmax = (z * h + y) * w + xx
    return np.ascontiguousarray(out), MaxPoolCache(x.shape, argmax)


def maxpool3d_backward(grad_out: Tensor, cache: MaxPoolCache) -> Tensor:
    """
    Routes each upstream gradient to the argmax voxel of its window.
    """
    cache = _require(cache, MaxPoolCache)
    if grad_out.shape != cache.argmax.shape:
        raise ShapeError(f"maxpool3d grad_out shape {grad_out.shape} does not match output {cache.argmax.shape}")
    n, c = cache.input_shape[:2]
    dx = np.zeros((n, c, int(np.prod(cache.input_shape[2:]))), dtype=grad_out.dtype)
    np.put_along_axis(dx, cache.argmax.reshape(n, c, -1), grad_out.reshape(n, c, -1), axis=2)
    return dx.reshape(cache.input_shape)


def group_norm(x: Tensor, gamma: Tensor, beta: Tensor, num_groups: int,
               eps: float = 1e-5) -> tuple[Tensor, GroupNormCache]:
    """
    Group normalization with biased variance over each (sample, group).

    :param x:          input of shape (N, C, ...)
    :param gamma:      per-channel scale of shape (C,)
    :param beta:       per-channel shift of shape (C,)
    :param num_groups: number of channel groups; must divide C
    :param eps:        variance floor, > 0
    """
    n, c = x.shape[:2]
    if num_groups < 1 or c % num_groups:
        raise ShapeError(f"group_norm: {c} channels are not divisible into {num_groups} groups")
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"group_norm affine shapes {gamma.shape}/{beta.shape} do not match ({c},)")
    if eps <= 0:
        raise ValueError("group_norm eps must be positive")

    grouped = x.reshape(n, num_groups, -1)
    mean = grouped.mean(axis=2, keepdims=True)
    var = grouped.var(axis=2, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = ((grouped - mean) * inv_std).reshape(x.shape)
    affine = (1, c) + (1,) * (x.ndim - 2)
    out = x_hat * gamma.reshape(affine) + beta.reshape(affine)
    return out, GroupNormCache(x_hat, inv_std, gamma, num_groups)


def group_norm_backward(grad_out: Tensor, cache: GroupNormCache) -> tuple[Tensor, Tensor, Tensor]:
    """
    :return: (grad_input, grad_gamma, grad_beta)
    """
    cache = _require(cache, GroupNormCache)
    x_hat = cache.x_hat
    if grad_out.shape != x_hat.shape:
        raise ShapeError(f"group_norm grad_out shape {grad_out.shape} does not match {x_hat.shape}")
    n, c = x_hat.shape[:2]
    reduce_axes = (0,) + tuple(range(2, x_hat.ndim))
    affine = (1, c) + (1,) * (x_hat.ndim - 2)

    d_gamma = (grad_out * x_hat).sum(axis=reduce_axes)
    d_beta = grad_out.sum(axis=reduce_axes)

    d_xhat = (grad_out * cache.gamma.reshape(affine)).reshape(n, cache.num_groups, -1)
    xh = x_hat.reshape(n, cache.num_groups, -1)
    m = xh.shape[2]
    dx = (cache.inv_std / m) * (m * d_xhat
                                - d_xhat.sum(axis=2, keepdims=True)
                                - xh * (d_xhat * xh).sum(axis=2, keepdims=True))
    return dx.reshape(x_hat.shape), d_gamma, d_beta


def activation(x: Tensor, kind: str) -> tuple[Tensor, ActivationCache]:
    """
    Elementwise relu or sigmoid.

    Sigmoid output is clamped to the open interval (0, 1) of the input's
    floating point type.
    """
    if kind == "relu":
        out = np.maximum(x, 0)
    elif kind == "sigmoid":
        finfo = np.finfo(x.dtype)
        out = np.clip(expit(x), finfo.tiny, 1 - finfo.epsneg)
    else:
        raise ValueError(f"Unknown activation: {kind}")
    return out, ActivationCache(kind, x, out)


def activation_backward(grad_out: Tensor, cache: ActivationCache) -> Tensor:
    cache = _require(cache, ActivationCache)
    if cache.kind == "relu":
        return grad_out * (cache.x > 0)
    return grad_out * cache.out * (1 - cache.out)


def elementwise(a: Tensor, b: Tensor, op: str) -> tuple[Tensor, ElementwiseCache]:
    """
    `a + b` or `a * b`. `b` may have a single channel (axis 1) and is then
    broadcast over the channels of `a`.
    """
    if op not in ("add", "mul"):
        raise ValueError(f"Unknown elementwise op: {op}")
    broadcast = False
    if a.shape != b.shape:
        if (a.ndim != b.ndim or a.ndim < 2 or b.shape[1] != 1
                or a.shape[:1] + a.shape[2:] != b.shape[:1] + b.shape[2:]):
            raise ShapeError(f"elementwise {op}: shapes {a.shape} and {b.shape} are not broadcastable")
        broadcast = True
    out = a + b if op == "add" else a * b
    return out, ElementwiseCache(op, a, b, broadcast)


def elementwise_backward(grad_out: Tensor, cache: ElementwiseCache) -> tuple[Tensor, Tensor]:
    """
    :return: (grad_a, grad_b); grad_b is summed over channels when `b` was broadcast
    """
    cache = _require(cache, ElementwiseCache)
    if cache.op == "add":
        da, db = grad_out, grad_out
    else:
        da, db = grad_out * cache.b, grad_out * cache.a
    if cache.broadcast:
        db = db.sum(axis=1, keepdims=True)
    return da, db


def concat_channels(a: Tensor, b: Tensor) -> tuple[Tensor, ConcatCache]:
    """
    Concatenates along axis 1; the channels of `a` come first.
    """
    if a.ndim != b.ndim or a.ndim < 2:
        raise ShapeError(f"concat_channels: ranks of {a.shape} and {b.shape} differ")
    if a.shape[1] == 0 or b.shape[1] == 0:
        raise ShapeError("concat_channels: empty channel axis")
    if a.shape[:1] + a.shape[2:] != b.shape[:1] + b.shape[2:]:
        raise ShapeError(f"concat_channels: batch/spatial extents differ ({a.shape} vs {b.shape})")
    return np.concatenate([a, b], axis=1), ConcatCache(a.shape[1])


def concat_channels_backward(grad_out: Tensor, cache: ConcatCache) -> tuple[Tensor, Tensor]:
    cache = _require(cache, ConcatCache)
    return grad_out[:, :cache.split], grad_out[:, cache.split:]
