# -*- coding: utf-8 -*-

"""
Network blocks: residual blocks, the attention gate, multiscale spatial
attention, and the encoder/decoder stages that compose them.

Attention orientation: the gating signal is the encoder skip and the gated
features are the upsampled decoder features. This is the reverse of the
usual attention U-Net, which gates the encoder skip with the decoder signal.
"""

from __future__ import annotations

__all__ = ['ResBlock', 'DualResBlock', 'ConvBlock', 'stage_block', 'AttentionGate', 'MultiScaleAttention',
           'EncoderBlock', 'DecoderBlock', 'MSA_KERNELS']

import logging
import math
from typing import Optional

import numpy as np

from . import kernels
from .kernels import ConvSpec, Tensor
from .layers import Module, Conv3d, ConvTranspose3d, GroupNorm
from ..errors import ShapeError

logger = logging.getLogger(__name__)

MSA_KERNELS = (3, 5, 7)


def _check_channels(x: Tensor, expected: int, where: str) -> None:
    if x.ndim != 5 or x.shape[1] != expected:
        raise ShapeError(f"{where}: expected {expected} input channels, received shape {x.shape}")


def _check_spatial(a: Tensor, b: Tensor, where: str) -> None:
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"{where}: spatial extents differ ({a.shape} vs {b.shape})")


class ResBlock(Module):
    """
    relu(GN(conv3(relu(GN(conv3(x))))) + y), where y is x itself when the
    channel counts match and GN(conv1(x)) otherwise.
    """

    def __init__(self, in_channels: int, out_channels: int, dtype=np.float32):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.conv1 = Conv3d(ConvSpec(in_channels, out_channels, 3, 1, 1), dtype)
        self.norm1 = GroupNorm(out_channels, dtype=dtype)
        self.conv2 = Conv3d(ConvSpec(out_channels, out_channels, 3, 1, 1), dtype)
        self.norm2 = GroupNorm(out_channels, dtype=dtype)
        self.shortcut_conv: Optional[Conv3d] = None
        self.shortcut_norm: Optional[GroupNorm] = None
        if in_channels != out_channels:
            self.shortcut_conv = Conv3d(ConvSpec(in_channels, out_channels, 1), dtype)
            self.shortcut_norm = GroupNorm(out_channels, dtype=dtype)
        self._caches = None

    @property
    def has_shortcut(self) -> bool:
        return self.shortcut_conv is not None

    def forward(self, x: Tensor) -> Tensor:
        _check_channels(x, self.in_channels, "ResBlock")
        h, relu1 = kernels.activation(self.norm1.forward(self.conv1.forward(x)), "relu")
        f1 = self.norm2.forward(self.conv2.forward(h))
        y = self.shortcut_norm.forward(self.shortcut_conv.forward(x)) if self.has_shortcut else x
        out, relu2 = kernels.activation(f1 + y, "relu")
        self._caches = (relu1, relu2)
        return out

    def backward(self, grad_out: Tensor) -> Tensor:
        relu1, relu2 = self._caches
        g = kernels.activation_backward(grad_out, relu2)
        gh = self.conv2.backward(self.norm2.backward(g))
        dx = self.conv1.backward(self.norm1.backward(kernels.activation_backward(gh, relu1)))
        if self.has_shortcut:
            return dx + self.shortcut_conv.backward(self.shortcut_norm.backward(g))
        return dx + g

    def flops(self, extent: tuple[int, ...]) -> float:
        voxels = math.prod(extent)
        total = (self.conv1.flops(extent) + self.norm1.flops(extent)
                 + self.conv2.flops(extent) + self.norm2.flops(extent)
                 + 3 * self.out_channels * voxels)  # two relus and the residual add
        if self.has_shortcut:
            total += self.shortcut_conv.flops(extent) + self.shortcut_norm.flops(extent)
        return total


class DualResBlock(Module):
    """
    Two residual blocks in sequence; the first adapts the channel count.
    """

    def __init__(self, in_channels: int, out_channels: int, dtype=np.float32):
        self.first = ResBlock(in_channels, out_channels, dtype)
        self.second = ResBlock(out_channels, out_channels, dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.second.forward(self.first.forward(x))

    def backward(self, grad_out: Tensor) -> Tensor:
        return self.first.backward(self.second.backward(grad_out))

    def flops(self, extent: tuple[int, ...]) -> float:
        return self.first.flops(extent) + self.second.flops(extent)


class ConvBlock(Module):
    """
    relu(GN(conv3(relu(GN(conv3(x)))))), the plain U-Net stage with no
    residual path.
    """

    def __init__(self, in_channels: int, out_channels: int, dtype=np.float32):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.conv1 = Conv3d(ConvSpec(in_channels, out_channels, 3, 1, 1), dtype)
        self.norm1 = GroupNorm(out_channels, dtype=dtype)
        self.conv2 = Conv3d(ConvSpec(out_channels, out_channels, 3, 1, 1), dtype)
        self.norm2 = GroupNorm(out_channels, dtype=dtype)
        self._caches = None

    def forward(self, x: Tensor) -> Tensor:
        _check_channels(x, self.in_channels, "ConvBlock")
        h, relu1 = kernels.activation(self.norm1.forward(self.conv1.forward(x)), "relu")
        out, relu2 = kernels.activation(self.norm2.forward(self.conv2.forward(h)), "relu")
        self._caches = (relu1, relu2)
        return out

    def backward(self, grad_out: Tensor) -> Tensor:
        relu1, relu2 = self._caches
        gh = self.conv2.backward(self.norm2.backward(kernels.activation_backward(grad_out, relu2)))
        return self.conv1.backward(self.norm1.backward(kernels.activation_backward(gh, relu1)))

    def flops(self, extent: tuple[int, ...]) -> float:
        return (self.conv1.flops(extent) + self.norm1.flops(extent)
                + self.conv2.flops(extent) + self.norm2.flops(extent)
                + 2 * self.out_channels * math.prod(extent))


def stage_block(in_channels: int, out_channels: int, plain: bool = False, dtype=np.float32) -> Module:
    """
    The feature extractor of one network stage: two residual blocks, or a
    ConvBlock when `plain`.
    """
    if plain:
        return ConvBlock(in_channels, out_channels, dtype)
    return DualResBlock(in_channels, out_channels, dtype)


class AttentionGate(Module):
    """
    psi = sigmoid(conv1(relu(GN(conv1(gate))) + relu(GN(conv1(features)))))
    and the gated output is features * psi, psi broadcast over channels.
    """

    def __init__(self, gate_channels: int, feature_channels: int, inter_channels: int,
                 dtype=np.float32):
        self.gate_channels = gate_channels
        self.feature_channels = feature_channels
        self.inter_channels = inter_channels
        self.gate_conv = Conv3d(ConvSpec(gate_channels, inter_channels, 1), dtype)
        self.gate_norm = GroupNorm(inter_channels, dtype=dtype)
        self.feature_conv = Conv3d(ConvSpec(feature_channels, inter_channels, 1), dtype)
        self.feature_norm = GroupNorm(inter_channels, dtype=dtype)
        self.psi_conv = Conv3d(ConvSpec(inter_channels, 1, 1), dtype)
        self._caches = None

    def forward(self, gate: Tensor, features: Tensor) -> tuple[Tensor, Tensor]:
        """
        :param gate:     gating signal G (the encoder skip)
        :param features: decoder features X_dec, already upsampled
        :return: (gated features, psi)
        """
        _check_channels(gate, self.gate_channels, "AttentionGate gate")
        _check_channels(features, self.feature_channels, "AttentionGate features")
        _check_spatial(gate, features, "AttentionGate")
        g, relu_g = kernels.activation(self.gate_norm.forward(self.gate_conv.forward(gate)), "relu")
        f, relu_f = kernels.activation(self.feature_norm.forward(self.feature_conv.forward(features)), "relu")
        psi, sig = kernels.activation(self.psi_conv.forward(g + f), "sigmoid")
        gated, mul = kernels.elementwise(features, psi, "mul")
        self._caches = (relu_g, relu_f, sig, mul)
        return gated, psi

    def backward(self, grad_gated: Tensor, grad_psi: Optional[Tensor] = None) -> tuple[Tensor, Tensor]:
        """
        :return: (grad_gate, grad_features)
        """
        relu_g, relu_f, sig, mul = self._caches
        d_features, d_psi = kernels.elementwise_backward(grad_gated, mul)
        if grad_psi is not None:
            d_psi = d_psi + grad_psi
        d_sum = self.psi_conv.backward(kernels.activation_backward(d_psi, sig))
        d_gate = self.gate_conv.backward(self.gate_norm.backward(kernels.activation_backward(d_sum, relu_g)))
        d_feat_path = self.feature_conv.backward(
            self.feature_norm.backward(kernels.activation_backward(d_sum, relu_f)))
        return d_gate, d_features + d_feat_path

    def flops(self, extent: tuple[int, ...]) -> float:
        voxels = math.prod(extent)
        return (self.gate_conv.flops(extent) + self.gate_norm.flops(extent)
                + self.feature_conv.flops(extent) + self.feature_norm.flops(extent)
                + self.psi_conv.flops(extent)
                + 3 * self.inter_channels * voxels  # two relus and the add
                + 4 * voxels  # sigmoid
                + self.feature_channels * voxels)


class MultiScaleAttention(Module):
    """
    S = sum over k in {3, 5, 7} of sigmoid(conv_k(x)), each conv mapping
    C channels to one and preserving extents; the output is x * S.
    """

    def __init__(self, channels: int, dtype=np.float32):
        self.channels = channels
        self.convs = [Conv3d(ConvSpec(channels, 1, k, 1, k // 2), dtype) for k in MSA_KERNELS]
        self._caches = None

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """
        :return: (x * S, S)
        """
        _check_channels(x, self.channels, "MultiScaleAttention")
        sigs = []
        s = None
        for conv in self.convs:
            a_k, sig = kernels.activation(conv.forward(x), "sigmoid")
            sigs.append(sig)
            s = a_k if s is None else s + a_k
        out, mul = kernels.elementwise(x, s, "mul")
        self._caches = (sigs, mul)
        return out, s

    def backward(self, grad_out: Tensor) -> Tensor:
        sigs, mul = self._caches
        dx, d_s = kernels.elementwise_backward(grad_out, mul)
        for conv, sig in zip(self.convs, sigs):
            dx = dx + conv.backward(kernels.activation_backward(d_s, sig))
        return dx

    def flops(self, extent: tuple[int, ...]) -> float:
        voxels = math.prod(extent)
        return (sum(conv.flops(extent) for conv in self.convs)
                + len(self.convs) * 5 * voxels  # sigmoid and accumulate
                + self.channels * voxels)


class EncoderBlock(Module):
    """
    Two residual blocks followed by 2x2x2 max pooling.
    """

    def __init__(self, in_channels: int, out_channels: int, dtype=np.float32, plain: bool = False):
        self.out_channels = out_channels
        self.res = stage_block(in_channels, out_channels, plain, dtype)
        self._pool_cache = None

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """
        :return: (skip at full resolution, pooled output at half resolution)
        """
        skip = self.res.forward(x)
        down, self._pool_cache = kernels.maxpool3d(skip)
        return skip, down

    def backward(self, grad_skip: Tensor, grad_down: Tensor) -> Tensor:
        d_skip = grad_skip + kernels.maxpool3d_backward(grad_down, self._pool_cache)
        return self.res.backward(d_skip)

    def flops(self, extent: tuple[int, ...]) -> float:
        return self.res.flops(extent) + self.out_channels * math.prod(extent)


class DecoderBlock(Module):
    """
    Upsample, gate with the encoder skip, apply multiscale attention, fuse
    with the skip by channel concatenation, then refine with two residual
    blocks.

    A `plain` block skips both attentions and refines with a ConvBlock.
    """

    def __init__(self, below_channels: int, skip_channels: int, width: int, dtype=np.float32,
                 plain: bool = False):
        self.width = width
        self.up = ConvTranspose3d(below_channels, width, dtype)
        self.gate: Optional[AttentionGate] = None
        self.msa: Optional[MultiScaleAttention] = None
        if not plain:
            self.gate = AttentionGate(skip_channels, width, max(1, width // 2), dtype)
            self.msa = MultiScaleAttention(width, dtype)
        self.res = stage_block(width + skip_channels, width, plain, dtype)
        self._concat_cache = None

    def forward(self, below: Tensor, skip: Tensor) -> Tensor:
        x_dec = self.up.forward(below)
        if x_dec.shape[2:] != skip.shape[2:]:
            raise ShapeError(f"DecoderBlock: upsampled extent {x_dec.shape[2:]} "
                             f"does not match skip extent {skip.shape[2:]}")
        attended = x_dec
        if self.gate is not None:
            gated, _ = self.gate.forward(skip, x_dec)
            attended, _ = self.msa.forward(gated)
        fused, self._concat_cache = kernels.concat_channels(attended, skip)
        return self.res.forward(fused)

    def backward(self, grad_out: Tensor) -> tuple[Tensor, Tensor]:
        """
        :return: (grad_below, grad_skip)
        """
        d_attended, d_skip = kernels.concat_channels_backward(self.res.backward(grad_out), self._concat_cache)
        if self.gate is None:
            return self.up.backward(d_attended), d_skip
        d_gate, d_xdec = self.gate.backward(self.msa.backward(d_attended))
        return self.up.backward(d_xdec), d_skip + d_gate

    def flops(self, extent: tuple[int, ...]) -> float:
        """
        :param extent: spatial extent of the block's output (the skip extent)
        """
        below = tuple(e // 2 for e in extent)
        total = self.up.flops(below) + self.res.flops(extent)
        if self.gate is not None:
            total += self.gate.flops(extent) + self.msa.flops(extent)
        return total
