# -*- coding: utf-8 -*-

"""
Central finite-difference verification of the hand-written backward passes.

All checks run in double precision. Each check builds a scalar loss
L = sum(output * R) with a fixed random cotangent R, so the analytic
gradient is whatever `backward(R)` returns.
"""

from __future__ import annotations

__all__ = ['rel_error', 'branch_state', 'numeric_gradient', 'sampled_numeric_gradient', 'GradCheckResult', 'run_suite']

import dataclasses
import logging
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import kernels
from .blocks import ResBlock, AttentionGate, MultiScaleAttention, EncoderBlock, DecoderBlock
from .kernels import ConvSpec, Tensor
from .layers import Module, Conv3d, ConvTranspose3d, GroupNorm
from .network import init_params
from ..config import ModelConfig

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-4
# central differences of a double precision loss carry noise well below this
DEFAULT_ATOL = 1e-5


def rel_error(analytic: Tensor, numeric: Tensor, atol: float = DEFAULT_ATOL) -> float:
    """
    Largest elementwise |a - n| / max(|a| + |n|, atol).

    Coordinates whose gradient is smaller than `atol` on both sides are
    compared in absolute terms, so a parameter with a structurally zero
    gradient (a convolution bias feeding a one-channel group norm) is not
    scored on finite-difference noise. NaN entries of `numeric` mark
    skipped coordinates and are ignored.
    """
    keep = np.isfinite(np.asarray(numeric, dtype=np.float64))
    a = np.asarray(analytic, dtype=np.float64)[keep]
    n = np.asarray(numeric, dtype=np.float64)[keep]
    return float((np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), atol)).max(initial=0.0))


def branch_state(module: Module) -> Callable[[], bytes]:
    """
    A snapshot of every relu sign pattern and max pooling argmax cached by
    `module`'s most recent forward call. A perturbation that changes it has
    crossed a kink, and its difference quotient is meaningless.
    """
    def snapshot() -> bytes:
        parts = []
        for m in module.modules():
            for cache in getattr(m, "_caches", None) or ():
                if isinstance(cache, kernels.ActivationCache) and cache.kind == "relu":
                    parts.append(np.packbits(cache.x > 0).tobytes())
            pool = getattr(m, "_pool_cache", None)
            if pool is not None:
                parts.append(pool.argmax.tobytes())
        return b"".join(parts)

    return snapshot


def _difference(f: Callable[[], float], flat: Tensor, i: int, h: float,
                state: Optional[Callable[[], bytes]], base: Optional[bytes]) -> float:
    old = flat[i]
    flat[i] = old + h
    plus = f()
    moved = state is not None and state() != base
    flat[i] = old - h
    minus = f()
    moved = moved or (state is not None and state() != base)
    flat[i] = old
    if moved:
        return np.nan
    return (plus - minus) / (2 * h)


def numeric_gradient(f: Callable[[], float], x: Tensor, h: float = DEFAULT_STEP,
                     state: Optional[Callable[[], bytes]] = None) -> Tensor:
    """
    Central differences of `f` w.r.t. every element of `x`, perturbed in place.
    With `state`, coordinates whose perturbation changes it come back as NaN.
    """
    base = None
    if state is not None:
        f()
        base = state()
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    for i in range(flat.size):
        grad.reshape(-1)[i] = _difference(f, flat, i, h, state, base)
    return grad


def sampled_numeric_gradient(f: Callable[[], float], x: Tensor, indices: Iterable[int],
                             h: float = DEFAULT_STEP, state: Optional[Callable[[], bytes]] = None) -> Tensor:
    """
    Central differences of `f` at the given flat indices of `x`.
    """
    base = None
    if state is not None:
        f()
        base = state()
    flat = x.reshape(-1)
    return np.array([_difference(f, flat, i, h, state, base) for i in indices], dtype=np.float64)


@dataclasses.dataclass
class GradCheckResult:
    name: str
    max_rel_error: float

    def passed(self, tol: float) -> bool:
        return self.max_rel_error <= tol


def _randomize(module: Module, rng: np.random.Generator, scale: float = 0.5) -> Module:
    module.astype(np.float64)
    for _, p in module.named_parameters():
        p.value = rng.normal(0.0, scale, p.value.shape)
    return module


def _check_module(name: str, module: Module, inputs: Sequence[Tensor],
                  run: Callable[..., Tensor], back: Callable[[Tensor], Sequence[Tensor]],
                  rng: np.random.Generator, param_samples: int = 6) -> GradCheckResult:
    """
    Compares input and sampled parameter gradients of one module.
    """
    cotangent = rng.normal(size=run(*inputs).shape)

    def loss() -> float:
        return float((run(*inputs) * cotangent).sum())

    state = branch_state(module)
    module.zero_grad()
    run(*inputs)
    analytic_inputs = back(cotangent)
    errors = []
    for x, g in zip(inputs, analytic_inputs):
        errors.append(rel_error(g, numeric_gradient(loss, x, state=state)))
    for _, p in module.named_parameters():
        idx = rng.choice(p.value.size, size=min(param_samples, p.value.size), replace=False)
        analytic = p.grad.reshape(-1)[idx]
        errors.append(rel_error(analytic, sampled_numeric_gradient(loss, p.value, idx, state=state)))
    return GradCheckResult(name, max(errors))


def _check_kernel(name: str, forward: Callable[..., Tensor], backward: Callable[[Tensor], Sequence[Tensor]],
                  inputs: Sequence[Tensor], rng: np.random.Generator) -> GradCheckResult:
    cotangent = rng.normal(size=forward(*inputs).shape)

    def loss() -> float:
        return float((forward(*inputs) * cotangent).sum())

    forward(*inputs)
    analytic = backward(cotangent)
    errors = [rel_error(g, numeric_gradient(loss, x)) for x, g in zip(inputs, analytic)]
    return GradCheckResult(name, max(errors))


def check_conv3d(rng: np.random.Generator) -> GradCheckResult:
    spec = ConvSpec(2, 3, 3, 1, 1)
    x = rng.normal(size=(1, 2, 4, 4, 4))
    w = rng.normal(size=spec.weight_shape)
    b = rng.normal(size=3)
    state = {}

    def fwd(x_, w_, b_):
        out, state["cache"] = kernels.conv3d(x_, w_, b_, spec)
        return out

    return _check_kernel("conv3d", fwd, lambda g: kernels.conv3d_backward(g, state["cache"]), [x, w, b], rng)


def check_conv_transpose3d(rng: np.random.Generator) -> GradCheckResult:
    x = rng.normal(size=(1, 2, 3, 3, 3))
    w = rng.normal(size=(2, 3, 2, 2, 2))
    b = rng.normal(size=3)
    state = {}

    def fwd(x_, w_, b_):
        out, state["cache"] = kernels.conv_transpose3d(x_, w_, b_)
        return out

    return _check_kernel("conv_transpose3d", fwd,
                         lambda g: kernels.conv_transpose3d_backward(g, state["cache"]), [x, w, b], rng)


def check_maxpool3d(rng: np.random.Generator) -> GradCheckResult:
    # well separated values keep every perturbation away from a tie
    x = (rng.permutation(2 * 4 * 4 * 4).astype(np.float64) * 1e-2).reshape(1, 2, 4, 4, 4)
    state = {}

    def fwd(x_):
        out, state["cache"] = kernels.maxpool3d(x_)
        return out

    return _check_kernel("maxpool3d", fwd, lambda g: (kernels.maxpool3d_backward(g, state["cache"]),), [x], rng)


def check_group_norm(rng: np.random.Generator) -> GradCheckResult:
    x = rng.normal(size=(2, 4, 3, 3, 3))
    gamma = rng.normal(size=4)
    beta = rng.normal(size=4)
    state = {}

    def fwd(x_, g_, b_):
        out, state["cache"] = kernels.group_norm(x_, g_, b_, 2)
        return out

    return _check_kernel("group_norm", fwd,
                         lambda g: kernels.group_norm_backward(g, state["cache"]), [x, gamma, beta], rng)


def check_activation(kind: str, rng: np.random.Generator) -> GradCheckResult:
    x = rng.normal(size=(1, 2, 3, 3, 3))
    if kind == "relu":
        # keep away from the kink
        x = np.where(np.abs(x) < 1e-2, 0.5, x)
    state = {}

    def fwd(x_):
        out, state["cache"] = kernels.activation(x_, kind)
        return out

    return _check_kernel(kind, fwd, lambda g: (kernels.activation_backward(g, state["cache"]),), [x], rng)


def check_broadcast_mul(rng: np.random.Generator) -> GradCheckResult:
    a = rng.normal(size=(1, 3, 2, 3, 2))
    b = rng.normal(size=(1, 1, 2, 3, 2))
    state = {}

    def fwd(a_, b_):
        out, state["cache"] = kernels.elementwise(a_, b_, "mul")
        return out

    return _check_kernel("elementwise_mul", fwd,
                         lambda g: kernels.elementwise_backward(g, state["cache"]), [a, b], rng)


def check_concat(rng: np.random.Generator) -> GradCheckResult:
    a = rng.normal(size=(1, 2, 2, 2, 2))
    b = rng.normal(size=(1, 3, 2, 2, 2))
    state = {}

    def fwd(a_, b_):
        out, state["cache"] = kernels.concat_channels(a_, b_)
        return out

    return _check_kernel("concat_channels", fwd,
                         lambda g: kernels.concat_channels_backward(g, state["cache"]), [a, b], rng)


def check_res_block(rng: np.random.Generator, in_channels: int = 2, out_channels: int = 4) -> GradCheckResult:
    block = _randomize(ResBlock(in_channels, out_channels), rng)
    x = rng.normal(size=(1, in_channels, 4, 4, 4))
    return _check_module(f"res_block_{in_channels}_{out_channels}", block, [x], block.forward,
                         lambda g: (block.backward(g),), rng)


def check_attention_gate(rng: np.random.Generator) -> GradCheckResult:
    gate = _randomize(AttentionGate(4, 4, 2), rng)
    g = rng.normal(size=(1, 4, 3, 3, 3))
    x = rng.normal(size=(1, 4, 3, 3, 3))
    return _check_module("attention_gate", gate, [g, x], lambda a, b: gate.forward(a, b)[0],
                         gate.backward, rng)


def check_msa(rng: np.random.Generator) -> GradCheckResult:
    msa = _randomize(MultiScaleAttention(2), rng, scale=0.2)
    x = rng.normal(size=(1, 2, 4, 4, 4))
    return _check_module("multiscale_attention", msa, [x], lambda a: msa.forward(a)[0],
                         lambda g: (msa.backward(g),), rng)


def check_encoder_block(rng: np.random.Generator) -> GradCheckResult:
    encoder = _randomize(EncoderBlock(2, 4), rng)
    x = rng.normal(size=(1, 2, 4, 4, 4))
    skip, down = encoder.forward(x)
    r_skip = rng.normal(size=skip.shape)
    r_down = rng.normal(size=down.shape)

    def loss() -> float:
        s, d = encoder.forward(x)
        return float((s * r_skip).sum() + (d * r_down).sum())

    encoder.zero_grad()
    encoder.forward(x)
    analytic = encoder.backward(r_skip, r_down)
    return GradCheckResult("encoder_block", rel_error(analytic, numeric_gradient(loss, x, state=branch_state(encoder))))


def check_decoder_block(rng: np.random.Generator, plain: bool = False) -> GradCheckResult:
    decoder = _randomize(DecoderBlock(4, 4, 4, plain=plain), rng, scale=0.3)
    below = rng.normal(size=(1, 4, 2, 2, 2))
    skip = rng.normal(size=(1, 4, 4, 4, 4))
    return _check_module("decoder_block", decoder, [below, skip], decoder.forward, decoder.backward, rng)


def check_network(rng: np.random.Generator, samples: int = 10, seed: int = 0,
                  variant: str = "attention") -> GradCheckResult:
    """
    Sampled-coordinate check of a soft Dice loss through a levels=2 network.
    """
    from ..optim import soft_dice_loss

    config = ModelConfig(in_channels=4, out_classes=3, base_filters=4, levels=2, bottleneck_filters=None,
                         variant=variant)
    network = init_params(config, seed, dtype=np.float64)
    x = rng.normal(size=(2, 4, 8, 8, 8))
    target = (rng.random(size=(2, 3, 8, 8, 8)) > 0.5).astype(np.float64)

    def loss() -> float:
        return soft_dice_loss(network.forward(x), target)[0]

    network.zero_grad()
    _, grad = soft_dice_loss(network.forward(x), target)
    network.backward(grad)

    state = branch_state(network)
    params = list(network.named_parameters())
    picks = rng.choice(len(params), size=samples, replace=True)
    analytic, numeric = [], []
    for k in picks:
        _, p = params[k]
        i = int(rng.integers(p.value.size))
        analytic.append(p.grad.reshape(-1)[i])
        numeric.append(sampled_numeric_gradient(loss, p.value, [i], state=state)[0])
    return GradCheckResult("network", rel_error(np.array(analytic), np.array(numeric)))


def check_soft_dice(rng: np.random.Generator) -> GradCheckResult:
    from ..optim import soft_dice_loss

    pred = rng.uniform(0.05, 0.95, size=(2, 3, 3, 3, 3))
    target = (rng.random(size=pred.shape) > 0.5).astype(np.float64)
    analytic = soft_dice_loss(pred, target)[1]
    numeric = numeric_gradient(lambda: soft_dice_loss(pred, target)[0], pred)
    return GradCheckResult("soft_dice_loss", rel_error(analytic, numeric))


def run_suite(seed: int = 0, names: Optional[Iterable[str]] = None) -> list[GradCheckResult]:
    """
    Runs every check (or the named subset) and returns their results in order.
    """
    checks: dict[str, Callable[[np.random.Generator], GradCheckResult]] = {
        "conv3d": check_conv3d,
        "conv_transpose3d": check_conv_transpose3d,
        "maxpool3d": check_maxpool3d,
        "group_norm": check_group_norm,
        "relu": lambda r: check_activation("relu", r),
        "sigmoid": lambda r: check_activation("sigmoid", r),
        "elementwise_mul": check_broadcast_mul,
        "concat_channels": check_concat,
        "res_block_projection": lambda r: check_res_block(r, 2, 4),
        "res_block_identity": lambda r: check_res_block(r, 4, 4),
        "attention_gate": check_attention_gate,
        "multiscale_attention": check_msa,
        "encoder_block": check_encoder_block,
        "decoder_block": check_decoder_block,
        "soft_dice_loss": check_soft_dice,
        "network": check_network,
        "unet_decoder_block": lambda r: check_decoder_block(r, plain=True),
        "unet_network": lambda r: check_network(r, variant="unet"),
    }
    selected = list(checks) if names is None else list(names)
    results = []
    for name in selected:
        rng = np.random.default_rng([seed, sum(map(ord, name))])
        result = checks[name](rng)
        result.name = name
        logger.info("gradcheck %s: max relative error %.3e" % (name, result.max_rel_error))
        results.append(result)
    return results
