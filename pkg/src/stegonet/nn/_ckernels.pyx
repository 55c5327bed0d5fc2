# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled im2col / col2im. Same layout and results as ``_fallback``."""
import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.string cimport memset

cnp.import_array()


cdef inline Py_ssize_t _first_valid(Py_ssize_t offset, Py_ssize_t stride) noexcept nogil:
    # smallest o >= 0 with o * stride + offset >= 0
    if offset >= 0:
        return 0
    return (-offset + stride - 1) // stride


cdef inline Py_ssize_t _end_valid(Py_ssize_t offset, Py_ssize_t stride, Py_ssize_t size, Py_ssize_t n) noexcept nogil:
    # one past the largest o < n with o * stride + offset < size
    cdef Py_ssize_t last
    if size - 1 - offset < 0:
        return 0
    last = (size - 1 - offset) // stride + 1
    return last if last < n else n


def im2col(const floating[:, :, :, ::1] x, int k, int stride, int pad):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Ho = (H + 2 * pad - k) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - k) // stride + 1
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((C * k * k, B * Ho * Wo), dtype=dtype)
    cdef floating[:, ::1] cols = out
    cdef Py_ssize_t c, ki, kj, b, oh, ow, row, oh0, oh1, ow0, ow1, off_h, off_w
    cdef floating* dst
    cdef const floating* src
    with nogil:
        for c in range(C):
            for ki in range(k):
                off_h = ki - pad
                oh0 = _first_valid(off_h, stride)
                oh1 = _end_valid(off_h, stride, H, Ho)
                for kj in range(k):
                    off_w = kj - pad
                    ow0 = _first_valid(off_w, stride)
                    ow1 = _end_valid(off_w, stride, W, Wo)
                    row = (c * k + ki) * k + kj
                    for b in range(B):
                        for oh in range(oh0, oh1):
                            dst = &cols[row, (b * Ho + oh) * Wo]
                            src = &x[b, c, oh * stride + off_h, 0]
                            if stride == 1:
                                for ow in range(ow0, ow1):
                                    dst[ow] = src[ow + off_w]
                            else:
                                for ow in range(ow0, ow1):
                                    dst[ow] = src[ow * stride + off_w]
    return out


def col2im(const floating[:, ::1] cols, tuple shape, int k, int stride, int pad):
    cdef Py_ssize_t B = shape[0], C = shape[1], H = shape[2], W = shape[3]
    cdef Py_ssize_t Ho = (H + 2 * pad - k) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - k) // stride + 1
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((B, C, H, W), dtype=dtype)
    cdef floating[:, :, :, ::1] x = out
    cdef Py_ssize_t c, ki, kj, b, oh, ow, row, oh0, oh1, ow0, ow1, off_h, off_w
    cdef floating* dst
    cdef const floating* src
    with nogil:
        # one (b, c) output plane stays hot in cache across all k*k offsets
        for b in range(B):
            for c in range(C):
                for ki in range(k):
                    off_h = ki - pad
                    oh0 = _first_valid(off_h, stride)
                    oh1 = _end_valid(off_h, stride, H, Ho)
                    for kj in range(k):
                        off_w = kj - pad
                        ow0 = _first_valid(off_w, stride)
                        ow1 = _end_valid(off_w, stride, W, Wo)
                        row = (c * k + ki) * k + kj
                        for oh in range(oh0, oh1):
                            src = &cols[row, (b * Ho + oh) * Wo]
                            dst = &x[b, c, oh * stride + off_h, 0]
                            if stride == 1:
                                for ow in range(ow0, ow1):
                                    dst[ow + off_w] += src[ow]
                            else:
                                for ow in range(ow0, ow1):
                                    dst[ow * stride + off_w] += src[ow]
    return out
