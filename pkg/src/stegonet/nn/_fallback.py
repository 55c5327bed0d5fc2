"""Pure-numpy im2col / col2im.

Column layout shared with the compiled kernels: row index is
``c * k * k + ki * k + kj`` and column index is ``b * Ho * Wo + oh * Wo + ow``.
"""
import numpy as np


def conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    B, C, H, W = x.shape
    Ho = conv_out_size(H, k, stride, pad)
    Wo = conv_out_size(W, k, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((C, k, k, B, Ho, Wo), dtype=x.dtype)
    h_end = stride * (Ho - 1) + 1
    w_end = stride * (Wo - 1) + 1
    for ki in range(k):
        for kj in range(k):
            patch = x[:, :, ki:ki + h_end:stride, kj:kj + w_end:stride]
            cols[:, ki, kj] = patch.transpose(1, 0, 2, 3)
    return cols.reshape(C * k * k, B * Ho * Wo)


def col2im(cols: np.ndarray, shape: tuple, k: int, stride: int, pad: int) -> np.ndarray:
    B, C, H, W = shape
    Ho = conv_out_size(H, k, stride, pad)
    Wo = conv_out_size(W, k, stride, pad)
    cols = cols.reshape(C, k, k, B, Ho, Wo)
    out = np.zeros((B, C, H + 2 * pad, W + 2 * pad), dtype=cols.dtype)
    h_end = stride * (Ho - 1) + 1
    w_end = stride * (Wo - 1) + 1
    for ki in range(k):
        for kj in range(k):
            out[:, :, ki:ki + h_end:stride, kj:kj + w_end:stride] += cols[:, ki, kj].transpose(1, 0, 2, 3)
    if pad:
        out = out[:, :, pad:pad + H, pad:pad + W]
    return np.ascontiguousarray(out)
