"""Differentiable layer operations on B x C x H x W tensors."""
from __future__ import annotations

from typing import Optional

import numpy as np

from . import kernels
from .tensor import Tensor


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


def _check_conv_args(x: Tensor, w: Tensor, stride: int, padding: int, in_axis: int, transposed: bool = False) -> int:
    if x.ndim != 4:
        raise ShapeError(f"expected a 4-D input (B, C, H, W), got shape {x.shape}")
    if w.ndim != 4 or w.shape[2] != w.shape[3]:
        raise ShapeError(f"expected a square 4-D kernel, got shape {w.shape}")
    if x.shape[1] != w.shape[in_axis]:
        raise ShapeError(
            f"input has {x.shape[1]} channels but the kernel expects {w.shape[in_axis]} (kernel shape {w.shape})"
        )
    k = w.shape[2]
    if k < 1 or stride < 1 or padding < 0:
        raise ShapeError(f"invalid geometry k={k}, stride={stride}, padding={padding}")
    if not transposed and (x.shape[2] + 2 * padding < k or x.shape[3] + 2 * padding < k):
        raise ShapeError(f"kernel {k} larger than padded input {x.shape[2:]} with padding {padding}")
    return k


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x`` with ``weight`` (C_out, C_in, k, k) plus bias."""
    k = _check_conv_args(x, weight, stride, padding, in_axis=1)
    B = x.shape[0]
    c_out = weight.shape[0]
    Ho = kernels.conv_out_size(x.shape[2], k, stride, padding)
    Wo = kernels.conv_out_size(x.shape[3], k, stride, padding)

    cols = kernels.im2col(x.data, k, stride, padding)
    w2 = weight.data.reshape(c_out, -1)
    out = w2 @ cols
    if bias is not None:
        out += bias.data[:, None]
    out = np.ascontiguousarray(out.reshape(c_out, B, Ho, Wo).transpose(1, 0, 2, 3))

    def backward(g):
        g2 = g.transpose(1, 0, 2, 3).reshape(c_out, -1)
        dx = kernels.col2im(w2.T @ g2, x.shape, k, stride, padding) if x.requires_grad else None
        dw = (g2 @ cols.T).reshape(weight.shape)
        grads = [dx, dw]
        if bias is not None:
            grads.append(g2.sum(axis=1))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._make(out, parents, backward)


def conv_transpose2d(
    x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0
) -> Tensor:
    """Fractionally strided convolution, the input-gradient of :func:`conv2d`.

    ``weight`` has shape (C_in, C_out, k, k); output spatial size is
    ``(H - 1) * stride - 2 * padding + k``.
    """
    k = _check_conv_args(x, weight, stride, padding, in_axis=0, transposed=True)
    B, c_in, H, W = x.shape
    c_out = weight.shape[1]
    Ho = (H - 1) * stride - 2 * padding + k
    Wo = (W - 1) * stride - 2 * padding + k
    if Ho < 1 or Wo < 1:
        raise ShapeError(f"transposed convolution output would be empty ({Ho}x{Wo})")
    out_shape = (B, c_out, Ho, Wo)

    x2 = x.data.transpose(1, 0, 2, 3).reshape(c_in, -1)
    w2 = weight.data.reshape(c_in, -1)
    out = kernels.col2im(w2.T @ x2, out_shape, k, stride, padding)
    if bias is not None:
        out += bias.data[None, :, None, None]

    def backward(g):
        gcols = kernels.im2col(g, k, stride, padding)
        dx = None
        if x.requires_grad:
            dx = np.ascontiguousarray((w2 @ gcols).reshape(c_in, B, H, W).transpose(1, 0, 2, 3))
        dw = (x2 @ gcols.T).reshape(weight.shape)
        grads = [dx, dw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._make(out, parents, backward)


BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPS,
) -> Tensor:
    """Per-channel normalization over batch and spatial axes.

    In training mode the batch statistics are used and the running buffers are
    updated in place (running variance takes the unbiased estimate).
    """
    if x.ndim != 4 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError(f"batch_norm got input {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    axes = (0, 2, 3)
    n = x.shape[0] * x.shape[2] * x.shape[3]
    g_ = gamma.data[None, :, None, None]

    if training:
        if n < 2:
            raise ShapeError("batch_norm in training mode needs at least 2 values per channel")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu[None, :, None, None]) * inv[None, :, None, None]
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * (n / (n - 1))

        def backward(g):
            dxhat = g * g_
            s1 = dxhat.sum(axis=axes)[None, :, None, None]
            s2 = (dxhat * xhat).sum(axis=axes)[None, :, None, None]
            dx = (inv[None, :, None, None] / n) * (n * dxhat - s1 - xhat * s2)
            return dx, (g * xhat).sum(axis=axes), g.sum(axis=axes)
    else:
        inv = 1.0 / np.sqrt(running_var + eps)
        xhat = (x.data - running_mean[None, :, None, None]) * inv[None, :, None, None]

        def backward(g):
            return g * g_ * inv[None, :, None, None], (g * xhat).sum(axis=axes), g.sum(axis=axes)

    out = (xhat * g_ + beta.data[None, :, None, None]).astype(x.dtype, copy=False)
    return Tensor._make(out, (x, gamma, beta), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor._make(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    scale = np.where(x.data > 0, 1.0, slope).astype(x.dtype)
    return Tensor._make(x.data * scale, (x,), lambda g: (g * scale,))


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    z = x.data
    e = np.exp(-np.abs(z))
    out = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)
    return Tensor._make(out, (x,), lambda g: (g * out * (1.0 - out),))
