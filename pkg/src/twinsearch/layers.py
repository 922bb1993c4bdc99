"""Dense-tensor layer kernel: forward and backward passes for the twin network.

Tensors are plain float64 numpy arrays in row-major HxWxC layout. Every layer
exposes ``forward(x, training, rng) -> (out, ctx)`` and
``backward(ctx, grad_out) -> LayerGrads``; the ctx object carries whatever the
backward pass needs, so a single layer instance can serve several concurrent
forward passes (the two twin slots share one set of parameter arrays).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DimensionError


@dataclass
class LayerGrads:
    """Gradients produced by one backward pass.

    grad_params aligns 1:1 with the layer's ``params`` list and each entry
    matches its parameter's shape; grad_input matches the forward input.
    """

    grad_input: np.ndarray
    grad_params: list[np.ndarray] = field(default_factory=list)


def _as_f64(x) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64))


def _pad_amounts(extent: int, kernel: int, padding: str) -> tuple[int, int]:
    if padding == "valid":
        return 0, 0
    if padding == "same":
        total = kernel - 1
        return total // 2, total - total // 2
    raise ConfigError(f"unknown padding mode {padding!r}")


def conv2d_forward(
    x: np.ndarray,
    kernels: np.ndarray,
    bias: np.ndarray,
    stride: int = 1,
    padding: str = "valid",
) -> np.ndarray:
    """Cross-correlate an HxWxC input with kh x kw x C x F kernels.

    Output is H'xW'xF with H' = floor((H_pad - kh) / stride) + 1. ``same``
    padding keeps the spatial extent when stride is 1 (used inside the
    residual block so its identity skip lines up).
    """
    x = _as_f64(x)
    kernels = _as_f64(kernels)
    bias = _as_f64(bias)
    if x.ndim != 3:
        raise DimensionError(f"input must be HxWxC, got {x.ndim} axes")
    if kernels.ndim != 4:
        raise DimensionError(f"kernels must be kh x kw x C x F, got {kernels.ndim} axes")
    if kernels.shape[2] != x.shape[2]:
        raise DimensionError(
            f"channel axis mismatch: input has C={x.shape[2]}, kernels expect C={kernels.shape[2]}"
        )
    if bias.shape != (kernels.shape[3],):
        raise DimensionError(
            f"bias axis mismatch: expected length F={kernels.shape[3]}, got {bias.shape}"
        )
    if stride <= 0:
        raise ConfigError(f"stride must be positive, got {stride}")

    kh, kw = kernels.shape[0], kernels.shape[1]
    pt, pb = _pad_amounts(x.shape[0], kh, padding)
    pl, pr = _pad_amounts(x.shape[1], kw, padding)
    x_pad = np.pad(x, ((pt, pb), (pl, pr), (0, 0))) if (pt or pb or pl or pr) else x
    if kh > x_pad.shape[0] or kw > x_pad.shape[1]:
        raise DimensionError(
            f"spatial axis too small: padded input {x_pad.shape[0]}x{x_pad.shape[1]} "
            f"vs kernel {kh}x{kw}"
        )

    # windows[h, w, c, i, j] = x_pad[h*stride + i, w*stride + j, c]
    windows = sliding_window_view(x_pad, (kh, kw), axis=(0, 1))[::stride, ::stride]
    out = np.tensordot(windows, kernels, axes=([2, 3, 4], [2, 0, 1])) + bias
    return np.ascontiguousarray(out)


def conv2d_backward(
    x: np.ndarray,
    kernels: np.ndarray,
    grad_out: np.ndarray,
    stride: int = 1,
    padding: str = "valid",
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv2d_forward: (grad_input, grad_kernels, grad_bias)."""
    x = _as_f64(x)
    kernels = _as_f64(kernels)
    grad_out = _as_f64(grad_out)
    kh, kw = kernels.shape[0], kernels.shape[1]
    pt, pb = _pad_amounts(x.shape[0], kh, padding)
    pl, pr = _pad_amounts(x.shape[1], kw, padding)
    x_pad = np.pad(x, ((pt, pb), (pl, pr), (0, 0))) if (pt or pb or pl or pr) else x

    windows = sliding_window_view(x_pad, (kh, kw), axis=(0, 1))[::stride, ::stride]
    grad_bias = grad_out.sum(axis=(0, 1))
    # (c, i, j, f) -> (i, j, c, f)
    grad_kernels = np.tensordot(windows, grad_out, axes=([0, 1], [0, 1])).transpose(1, 2, 0, 3)

    # Scatter the transposed correlation back onto the padded input. For a
    # fixed kernel offset the target rows h*stride + i never collide, so a
    # strided slice add is exact; offsets accumulate across iterations.
    h_out, w_out = grad_out.shape[0], grad_out.shape[1]
    spread = np.tensordot(grad_out, kernels, axes=([2], [3]))  # (h, w, i, j, c)
    grad_x_pad = np.zeros_like(x_pad)
    for i in range(kh):
        for j in range(kw):
            grad_x_pad[
                i : i + stride * h_out : stride,
                j : j + stride * w_out : stride,
            ] += spread[:, :, i, j, :]
    grad_input = grad_x_pad[pt : pt + x.shape[0], pl : pl + x.shape[1]]
    return np.ascontiguousarray(grad_input), grad_kernels, grad_bias


class Conv2D:
    """Convolution layer owning its kernel and bias tensors."""

    def __init__(self, kernels: np.ndarray, bias: np.ndarray, stride: int = 1,
                 padding: str = "valid", name: str = "conv"):
        self.kernels = _as_f64(kernels)
        self.bias = _as_f64(bias)
        self.stride = stride
        self.padding = padding
        self.name = name

    @property
    def params(self) -> list[np.ndarray]:
        return [self.kernels, self.bias]

    def forward(self, x, training=False, rng=None):
        out = conv2d_forward(x, self.kernels, self.bias, self.stride, self.padding)
        return out, x

    def backward(self, ctx, grad_out) -> LayerGrads:
        grad_input, grad_k, grad_b = conv2d_backward(
            ctx, self.kernels, grad_out, self.stride, self.padding
        )
        return LayerGrads(grad_input, [grad_k, grad_b])


class ReLU:
    """Elementwise max(0, x); gradient is masked by x > 0."""

    name = "relu"
    params: list[np.ndarray] = []

    def forward(self, x, training=False, rng=None):
        x = _as_f64(x)
        return np.maximum(x, 0.0), x > 0.0

    def backward(self, ctx, grad_out) -> LayerGrads:
        return LayerGrads(_as_f64(grad_out) * ctx)


class MaxPool2D:
    """Per-channel window max; backward routes to the first argmax in scan order."""

    params: list[np.ndarray] = []

    def __init__(self, window: int = 2, stride: int = 2, name: str = "max_pool"):
        if window <= 0 or stride <= 0:
            raise ConfigError(f"window and stride must be positive, got {window}, {stride}")
        self.window = window
        self.stride = stride
        self.name = name

    def forward(self, x, training=False, rng=None):
        x = _as_f64(x)
        if x.ndim != 3:
            raise DimensionError(f"input must be HxWxC, got {x.ndim} axes")
        w = self.window
        if w > x.shape[0] or w > x.shape[1]:
            raise DimensionError(
                f"pool window {w} exceeds spatial extent {x.shape[0]}x{x.shape[1]}"
            )
        windows = sliding_window_view(x, (w, w), axis=(0, 1))[:: self.stride, :: self.stride]
        flat = windows.reshape(windows.shape[0], windows.shape[1], windows.shape[2], w * w)
        argmax = flat.argmax(axis=3)  # first occurrence wins ties
        out = np.take_along_axis(flat, argmax[..., None], axis=3)[..., 0]
        return np.ascontiguousarray(out), (x.shape, argmax)

    def backward(self, ctx, grad_out) -> LayerGrads:
        in_shape, argmax = ctx
        grad_out = _as_f64(grad_out)
        w = self.window
        ho, wo, c = argmax.shape
        hh, ww, cc = np.meshgrid(np.arange(ho), np.arange(wo), np.arange(c), indexing="ij")
        rows = hh * self.stride + argmax // w
        cols = ww * self.stride + argmax % w
        grad_input = np.zeros(in_shape)
        np.add.at(grad_input, (rows, cols, cc), grad_out)
        return LayerGrads(grad_input)


class GlobalMaxPool:
    """Collapse HxWxC to a length-C vector of per-channel maxima."""

    name = "global_max_pool"
    params: list[np.ndarray] = []

    def forward(self, x, training=False, rng=None):
        x = _as_f64(x)
        if x.ndim != 3 or x.shape[0] < 1 or x.shape[1] < 1:
            raise DimensionError(f"input must be non-empty HxWxC, got shape {x.shape}")
        flat = x.reshape(-1, x.shape[2])
        argmax = flat.argmax(axis=0)  # first index in scan order on ties
        out = flat[argmax, np.arange(x.shape[2])]
        return out.copy(), (x.shape, argmax)

    def backward(self, ctx, grad_out) -> LayerGrads:
        in_shape, argmax = ctx
        grad_out = _as_f64(grad_out)
        grad_flat = np.zeros((in_shape[0] * in_shape[1], in_shape[2]))
        grad_flat[argmax, np.arange(in_shape[2])] = grad_out
        return LayerGrads(grad_flat.reshape(in_shape))


class Dropout:
    """Inverted dropout: identity at inference, mask + 1/(1-rate) scaling in training."""

    params: list[np.ndarray] = []

    def __init__(self, rate: float, name: str = "dropout"):
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.name = name

    def forward(self, x, training=False, rng=None):
        x = _as_f64(x)
        if not training or self.rate == 0.0:
            return x, None
        if rng is None:
            raise ConfigError("dropout in training mode needs an rng")
        keep = rng.random(x.shape) >= self.rate
        scale = 1.0 / (1.0 - self.rate)
        return x * keep * scale, (keep, scale)

    def backward(self, ctx, grad_out) -> LayerGrads:
        grad_out = _as_f64(grad_out)
        if ctx is None:
            return LayerGrads(grad_out.copy())
        keep, scale = ctx
        return LayerGrads(grad_out * keep * scale)


class ResidualBlock:
    """Conv chain with relu between stages and an identity skip over the block.

    The last conv must emit as many channels as the block receives so the
    skip addition is well defined; a final relu follows the addition.
    """

    def __init__(self, convs: list[Conv2D], name: str = "residual"):
        self.convs = convs
        self.name = name

    @property
    def params(self) -> list[np.ndarray]:
        return [p for conv in self.convs for p in conv.params]

    def forward(self, x, training=False, rng=None):
        x = _as_f64(x)
        ctxs = []
        h = x
        for idx, conv in enumerate(self.convs):
            h, conv_ctx = conv.forward(h, training, rng)
            if idx < len(self.convs) - 1:
                mask = h > 0.0
                h = np.maximum(h, 0.0)
            else:
                mask = None
            ctxs.append((conv_ctx, mask))
        if h.shape != x.shape:
            raise DimensionError(
                f"residual skip mismatch: block input {x.shape} vs chain output {h.shape}"
            )
        pre = h + x
        out_mask = pre > 0.0
        return np.maximum(pre, 0.0), (ctxs, out_mask)

    def backward(self, ctx, grad_out) -> LayerGrads:
        ctxs, out_mask = ctx
        g = _as_f64(grad_out) * out_mask
        grad_skip = g
        grad_params_rev: list[list[np.ndarray]] = []
        for idx in range(len(self.convs) - 1, -1, -1):
            conv_ctx, mask = ctxs[idx]
            if mask is not None:
                g = g * mask
            grads = self.convs[idx].backward(conv_ctx, g)
            g = grads.grad_input
            grad_params_rev.append(grads.grad_params)
        grad_params = [p for grads in reversed(grad_params_rev) for p in grads]
        return LayerGrads(g + grad_skip, grad_params)
