"""Differentiable layer primitives used by the enhancement network."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from uses_se.exceptions import ConfigError, DimensionError
from uses_se.numerics.tensor import Array, Function, Tensor, _normalize_axes


def _pair(value: int | tuple[int, int]) -> tuple[int, int]:
    if isinstance(value, int):
        return value, value
    return int(value[0]), int(value[1])


# -- dense ---------------------------------------------------------------


class Linear(Function):
    """y = x @ W^T + b over the last axis, for any number of leading axes."""

    name = "linear"

    def forward(self, x: Array, weight: Array, bias: Array) -> Array:  # type: ignore[override]
        if weight.ndim != 2 or x.shape[-1] != weight.shape[1] or bias.shape != (weight.shape[0],):
            raise DimensionError(
                f"linear: input {x.shape}, weight {weight.shape}, bias {bias.shape}"
            )
        self.x2d = x.reshape(-1, x.shape[-1])
        self.weight = weight
        self.x_shape = x.shape
        out = self.x2d @ weight.T + bias
        return out.reshape(*x.shape[:-1], weight.shape[0])

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        g2d = grad.reshape(-1, grad.shape[-1])
        gx = (g2d @ self.weight).reshape(self.x_shape)
        return gx, g2d.T @ self.x2d, g2d.sum(axis=0)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return Linear.apply(x, weight, bias)


class Softmax(Function):
    name = "softmax"

    def forward(self, x: Array, axis: int) -> Array:  # type: ignore[override]
        self.axis = _normalize_axes(axis, x.ndim)[0]
        shifted = np.exp(x - x.max(axis=self.axis, keepdims=True))
        self.out = shifted / shifted.sum(axis=self.axis, keepdims=True)
        return self.out

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        inner = (grad * self.out).sum(axis=self.axis, keepdims=True)
        return (self.out * (grad - inner),)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return Softmax.apply(x, axis=axis)


# -- convolution -----------------------------------------------------------


def _conv_output_extent(size: int, kernel: int, stride: int, pad: int) -> int:
    span = size + 2 * pad - kernel
    if span < 0:
        raise DimensionError(
            f"padded extent {size + 2 * pad} is smaller than kernel extent {kernel}"
        )
    return span // stride + 1


def _windows(xp: Array, kh: int, kw: int, sh: int, sw: int, oh: int, ow: int) -> Array:
    # (B, C, Hp, Wp) -> (B, C, oh, ow, kh, kw)
    view = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return view[:, :, : (oh - 1) * sh + 1 : sh, : (ow - 1) * sw + 1 : sw]


def _conv_forward(x: Array, kernel: Array, stride: tuple[int, int], pad: tuple[int, int]) -> Array:
    _, _, h, w = x.shape
    _, _, kh, kw = kernel.shape
    oh = _conv_output_extent(h, kh, stride[0], pad[0])
    ow = _conv_output_extent(w, kw, stride[1], pad[1])
    xp = np.pad(x, ((0, 0), (0, 0), (pad[0], pad[0]), (pad[1], pad[1])))
    cols = _windows(xp, kh, kw, stride[0], stride[1], oh, ow)
    return np.einsum("bchwij,ocij->bohw", cols, kernel, optimize=True)


def _conv_input_grad(
    grad: Array,
    kernel: Array,
    x_shape: tuple[int, ...],
    stride: tuple[int, int],
    pad: tuple[int, int],
) -> Array:
    b, c, h, w = x_shape
    _, _, kh, kw = kernel.shape
    _, _, oh, ow = grad.shape
    gp = np.zeros((b, c, h + 2 * pad[0], w + 2 * pad[1]), dtype=grad.dtype)
    for i in range(kh):
        for j in range(kw):
            contrib = np.einsum("bohw,oc->bchw", grad, kernel[:, :, i, j], optimize=True)
            gp[:, :, i : i + (oh - 1) * stride[0] + 1 : stride[0],
               j : j + (ow - 1) * stride[1] + 1 : stride[1]] += contrib
    return gp[:, :, pad[0] : pad[0] + h, pad[1] : pad[1] + w]


def _conv_kernel_grad(
    grad: Array,
    x: Array,
    kernel_shape: tuple[int, ...],
    stride: tuple[int, int],
    pad: tuple[int, int],
) -> Array:
    _, _, kh, kw = kernel_shape
    _, _, oh, ow = grad.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad[0], pad[0]), (pad[1], pad[1])))
    cols = _windows(xp, kh, kw, stride[0], stride[1], oh, ow)
    return np.einsum("bohw,bchwij->ocij", grad, cols, optimize=True)


class Conv2d(Function):
    name = "conv2d"

    def forward(  # type: ignore[override]
        self,
        x: Array,
        kernel: Array,
        bias: Array,
        stride: tuple[int, int],
        padding: tuple[int, int],
    ) -> Array:
        if x.ndim != 4 or kernel.ndim != 4 or x.shape[1] != kernel.shape[1]:
            raise DimensionError(f"conv2d: input {x.shape} does not match kernel {kernel.shape}")
        if bias.shape != (kernel.shape[0],):
            raise DimensionError(f"conv2d: bias {bias.shape} for {kernel.shape[0]} output channels")
        if min(kernel.shape[2:]) < 1 or min(stride) < 1:
            raise DimensionError("conv2d: kernel extents and strides must be >= 1")
        self.x, self.kernel, self.stride, self.padding = x, kernel, stride, padding
        out = _conv_forward(x, kernel, stride, padding)
        if 0 in out.shape[2:]:
            raise DimensionError(f"conv2d: zero-size spatial output {out.shape}")
        return out + bias[None, :, None, None]

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        gx = _conv_input_grad(grad, self.kernel, self.x.shape, self.stride, self.padding)
        gk = _conv_kernel_grad(grad, self.x, self.kernel.shape, self.stride, self.padding)
        return gx, gk, grad.sum(axis=(0, 2, 3))


class ConvTranspose2d(Function):
    """Adjoint of :class:`Conv2d` with respect to its input, plus a bias.

    The kernel is laid out (Cin, Cout, kh, kw), which is exactly the layout of
    the forward convolution it transposes (that convolution maps Cout -> Cin).
    """

    name = "conv_transpose2d"

    def forward(  # type: ignore[override]
        self,
        x: Array,
        kernel: Array,
        bias: Array,
        stride: tuple[int, int],
        padding: tuple[int, int],
    ) -> Array:
        if x.ndim != 4 or kernel.ndim != 4 or x.shape[1] != kernel.shape[0]:
            raise DimensionError(
                f"conv_transpose2d: input {x.shape} does not match kernel {kernel.shape}"
            )
        if bias.shape != (kernel.shape[1],):
            raise DimensionError(
                f"conv_transpose2d: bias {bias.shape} for {kernel.shape[1]} output channels"
            )
        b, _, h, w = x.shape
        _, cout, kh, kw = kernel.shape
        oh = (h - 1) * stride[0] - 2 * padding[0] + kh
        ow = (w - 1) * stride[1] - 2 * padding[1] + kw
        if oh <= 0 or ow <= 0:
            raise DimensionError(f"conv_transpose2d: zero-size spatial output ({oh}, {ow})")
        self.x, self.kernel, self.stride, self.padding = x, kernel, stride, padding
        out = _conv_input_grad(x, kernel, (b, cout, oh, ow), stride, padding)
        return out + bias[None, :, None, None]

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        gx = _conv_forward(grad, self.kernel, self.stride, self.padding)
        gk = _conv_kernel_grad(self.x, grad, self.kernel.shape, self.stride, self.padding)
        return gx, gk, grad.sum(axis=(0, 2, 3))


def conv2d(
    x: Tensor,
    kernel: Tensor,
    bias: Tensor,
    stride: int | tuple[int, int] = 1,
    padding: int | tuple[int, int] = 0,
) -> Tensor:
    """2-D cross-correlation of (B, Cin, H, W) with a (Cout, Cin, kh, kw) kernel."""
    return Conv2d.apply(x, kernel, bias, stride=_pair(stride), padding=_pair(padding))


def conv_transpose2d(
    x: Tensor,
    kernel: Tensor,
    bias: Tensor,
    stride: int | tuple[int, int] = 1,
    padding: int | tuple[int, int] = 0,
) -> Tensor:
    """Transposed convolution of (B, Cin, H, W) with a (Cin, Cout, kh, kw) kernel."""
    return ConvTranspose2d.apply(x, kernel, bias, stride=_pair(stride), padding=_pair(padding))


# -- normalization and activations ---------------------------------------------


def _along(vec: Array, axis: int, ndim: int) -> Array:
    shape = [1] * ndim
    shape[axis] = vec.shape[0]
    return vec.reshape(shape)


class LayerNorm(Function):
    name = "layer_norm"

    def forward(  # type: ignore[override]
        self, x: Array, gain: Array, bias: Array, axis: int, eps: float
    ) -> Array:
        self.axis = _normalize_axes(axis, x.ndim)[0]
        n = x.shape[self.axis]
        if gain.shape != (n,) or bias.shape != (n,):
            raise DimensionError(
                f"layer_norm: gain {gain.shape} / bias {bias.shape} do not match extent {n}"
            )
        mean = x.mean(axis=self.axis, keepdims=True)
        centered = x - mean
        var = (centered * centered).mean(axis=self.axis, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.xhat = centered * self.inv_std
        self.gain = _along(gain, self.axis, x.ndim)
        return self.xhat * self.gain + _along(bias, self.axis, x.ndim)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        others = tuple(i for i in range(grad.ndim) if i != self.axis)
        gxhat = grad * self.gain
        mean_g = gxhat.mean(axis=self.axis, keepdims=True)
        mean_gx = (gxhat * self.xhat).mean(axis=self.axis, keepdims=True)
        gx = self.inv_std * (gxhat - mean_g - self.xhat * mean_gx)
        return gx, (grad * self.xhat).sum(axis=others), grad.sum(axis=others)


def layer_norm(
    x: Tensor, gain: Tensor, bias: Tensor, axis: int = -1, eps: float = 1e-5
) -> Tensor:
    """Normalize each slice along ``axis`` to zero mean and unit variance, then scale/shift."""
    return LayerNorm.apply(x, gain, bias, axis=axis, eps=eps)


class PReLU(Function):
    name = "prelu"

    def forward(self, x: Array, slope: Array, axis: int) -> Array:  # type: ignore[override]
        if slope.ndim != 1:
            raise DimensionError(f"prelu: slope must be 1-d, got {slope.shape}")
        if slope.shape[0] == 1:
            s = slope.reshape((1,) * x.ndim)
        else:
            self.axis = _normalize_axes(axis, x.ndim)[0]
            if x.shape[self.axis] != slope.shape[0]:
                raise DimensionError(f"prelu: {slope.shape[0]} slopes for extent {x.shape[self.axis]}")
            s = _along(slope, self.axis, x.ndim)
        self.x, self.s, self.slope_shape = x, s, slope.shape
        self.neg = x < 0
        return np.where(self.neg, s * x, x)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        gx = np.where(self.neg, self.s * grad, grad)
        contrib = np.where(self.neg, grad * self.x, 0.0)
        if self.slope_shape[0] == 1:
            gs = np.array([contrib.sum()])
        else:
            others = tuple(i for i in range(grad.ndim) if i != self.axis)
            gs = contrib.sum(axis=others)
        return gx, gs


def prelu(x: Tensor, slope: Tensor, axis: int = 1) -> Tensor:
    """Parametric ReLU; ``slope`` holds one value, or one per index of ``axis``."""
    return PReLU.apply(x, slope, axis=axis)


class SymmetricMean(Function):
    """Mean along one axis whose value does not depend on the order of that axis.

    Values are sorted along the axis before a sequential sum, so permuting the
    inputs yields bit-identical outputs.
    """

    name = "symmetric_mean"

    def forward(self, x: Array, axis: int) -> Array:  # type: ignore[override]
        self.axis = _normalize_axes(axis, x.ndim)[0]
        self.shape = x.shape
        ordered = np.sort(x, axis=self.axis)
        total = np.add.reduce(ordered, axis=self.axis, keepdims=True)
        return total / x.shape[self.axis]

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (np.broadcast_to(grad / self.shape[self.axis], self.shape).copy(),)


def symmetric_mean(x: Tensor, axis: int = 0) -> Tensor:
    """Order-independent mean along ``axis`` (kept as a size-1 axis)."""
    return SymmetricMean.apply(x, axis=axis)


# -- attention ---------------------------------------------------------------


@dataclass
class AttentionParams:
    """Projection weights of one multi-head attention layer (``W`` is (out, in))."""

    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, length, dim = x.shape
    b = int(np.prod(lead)) if lead else 1
    return x.reshape(b, length, heads, dim // heads).transpose(0, 2, 1, 3)


def attention_weights(query: Tensor, key: Tensor) -> Tensor:
    """Softmax(q k^T / sqrt(d)) for already-projected (B, heads, L, d) tensors."""
    scale = 1.0 / math.sqrt(query.shape[-1])
    return softmax((query @ key.swapaxes(-1, -2)) * scale, axis=-1)


def multi_head_attention(
    query: Tensor,
    key: Tensor,
    value: Tensor,
    heads: int,
    params: AttentionParams,
) -> Tensor:
    """Scaled dot-product attention over (..., L, N) sequences with ``heads`` heads."""
    n = query.shape[-1]
    if heads < 1 or n % heads != 0:
        raise ConfigError(f"model dimension {n} is not divisible by {heads} heads")
    if key.shape != value.shape or key.shape[:-2] != query.shape[:-2]:
        raise DimensionError(f"attention: query {query.shape}, key {key.shape}, value {value.shape}")
    q = _split_heads(linear(query, params.wq, params.bq), heads)
    k = _split_heads(linear(key, params.wk, params.bk), heads)
    v = _split_heads(linear(value, params.wv, params.bv), heads)
    context = attention_weights(q, k) @ v  # (B, heads, L, d)
    merged = context.transpose(0, 2, 1, 3).reshape(*query.shape[:-1], n)
    return linear(merged, params.wo, params.bo)


def init_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype: Any) -> Tensor:
    """Fan-in scaled uniform initialization U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, dtype=dtype)
