# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Signatures mirror :mod:`gafnirs._fallback` exactly."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def im2col(const double[:, :, :, ::1] x, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((n * oh * ow, c * kh * kw), dtype=np.float64)
    cdef double[:, ::1] cols = out
    cdef Py_ssize_t b, ch, i, j, ki, kj, row, col, yi, xj
    with nogil:
        for b in range(n):
            for i in range(oh):
                for j in range(ow):
                    row = (b * oh + i) * ow + j
                    col = 0
                    for ch in range(c):
                        for ki in range(kh):
                            yi = i * stride + ki - pad
                            for kj in range(kw):
                                xj = j * stride + kj - pad
                                if 0 <= yi < h and 0 <= xj < w:
                                    cols[row, col] = x[b, ch, yi, xj]
                                col += 1
    return out


def col2im(const double[:, ::1] cols, tuple x_shape, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((n, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = out
    cdef Py_ssize_t b, ch, i, j, ki, kj, row, col, yi, xj
    with nogil:
        for b in range(n):
            for i in range(oh):
                for j in range(ow):
                    row = (b * oh + i) * ow + j
                    col = 0
                    for ch in range(c):
                        for ki in range(kh):
                            yi = i * stride + ki - pad
                            for kj in range(kw):
                                xj = j * stride + kj - pad
                                if 0 <= yi < h and 0 <= xj < w:
                                    dx[b, ch, yi, xj] += cols[row, col]
                                col += 1
    return out


def maxpool_forward(const double[:, :, :, ::1] x, int window, int stride):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h - window) // stride + 1
    cdef Py_ssize_t ow = (w - window) // stride + 1
    out_arr = np.empty((n, c, oh, ow), dtype=np.float64)
    idx_arr = np.empty((n, c, oh, ow), dtype=np.int64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef cnp.int64_t[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t b, ch, i, j, ki, kj, yi, xj, best_at
    cdef double best, v
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(oh):
                    for j in range(ow):
                        yi = i * stride
                        xj = j * stride
                        best = x[b, ch, yi, xj]
                        best_at = yi * w + xj
                        for ki in range(window):
                            for kj in range(window):
                                v = x[b, ch, yi + ki, xj + kj]
                                if v > best:
                                    best = v
                                    best_at = (yi + ki) * w + xj + kj
                        out[b, ch, i, j] = best
                        idx[b, ch, i, j] = best_at
    return out_arr, idx_arr


def maxpool_backward(const double[:, :, :, ::1] dout, const cnp.int64_t[:, :, :, ::1] idx,
                     tuple x_shape):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3]
    cdef Py_ssize_t oh = dout.shape[2], ow = dout.shape[3]
    dx_arr = np.zeros((n, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t b, ch, i, j, at
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(oh):
                    for j in range(ow):
                        at = idx[b, ch, i, j]
                        dx[b, ch, at // w, at % w] += dout[b, ch, i, j]
    return dx_arr


def sosfilt(const double[:, ::1] sos, const double[:, ::1] x, double[:, :, ::1] zi):
    """Cascade filter along the last axis of ``x``; ``zi`` (sections, rows, 2) is updated."""
    cdef Py_ssize_t ns = sos.shape[0], m = x.shape[0], t = x.shape[1]
    out = np.empty((m, t), dtype=np.float64)
    cdef double[:, ::1] y = out
    cdef Py_ssize_t r, k, s
    cdef double v, yv, z0, z1
    with nogil:
        for r in range(m):
            for k in range(t):
                v = x[r, k]
                for s in range(ns):
                    z0 = zi[s, r, 0]
                    z1 = zi[s, r, 1]
                    yv = sos[s, 0] * v + z0
                    zi[s, r, 0] = sos[s, 1] * v - sos[s, 4] * yv + z1
                    zi[s, r, 1] = sos[s, 2] * v - sos[s, 5] * yv
                    v = yv
                y[r, k] = v
    return out
