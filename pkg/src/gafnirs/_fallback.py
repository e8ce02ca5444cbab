"""Pure numpy versions of the compiled kernels in ``_core.pyx``.

Each function has the same signature and return layout as its compiled twin;
``tests/test_kernels.py`` checks the two against each other.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    oh, ow = _out_size(h, kh, stride, pad), _out_size(w, kw, stride, pad)
    win = win[:, :, :oh, :ow]
    # (n, c, oh, ow, kh, kw) -> (n, oh, ow, c, kh, kw)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * oh * ow, c * kh * kw)


def col2im(cols: np.ndarray, x_shape: tuple, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    n, c, h, w = x_shape
    oh, ow = _out_size(h, kh, stride, pad), _out_size(w, kw, stride, pad)
    blocks = cols.reshape(n, oh, ow, c, kh, kw)
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    for ki in range(kh):
        for kj in range(kw):
            patch = blocks[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
            dxp[:, :, ki:ki + stride * oh:stride, kj:kj + stride * ow:stride] += patch
    if pad:
        return np.ascontiguousarray(dxp[:, :, pad:-pad, pad:-pad])
    return dxp


def maxpool_forward(x: np.ndarray, window: int, stride: int):
    n, c, h, w = x.shape
    oh, ow = (h - window) // stride + 1, (w - window) // stride + 1
    win = sliding_window_view(x, (window, window), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :oh, :ow]
    flat = win.reshape(n, c, oh, ow, window * window)
    # argmax returns the first maximum, matching the strict ">" scan in the compiled kernel
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    ki, kj = np.divmod(arg, window)
    rows = np.arange(oh)[:, None] * stride + ki
    cols = np.arange(ow)[None, :] * stride + kj
    return np.ascontiguousarray(out), (rows * w + cols).astype(np.int64)


def maxpool_backward(dout: np.ndarray, idx: np.ndarray, x_shape: tuple) -> np.ndarray:
    n, c, h, w = x_shape
    flat_idx = idx.reshape(n * c, -1) + (np.arange(n * c) * (h * w))[:, None]
    dx = np.bincount(flat_idx.ravel(), weights=dout.ravel(), minlength=n * c * h * w)
    return dx.reshape(n, c, h, w)


def sosfilt(sos: np.ndarray, x: np.ndarray, zi: np.ndarray) -> np.ndarray:
    """Cascade filter along the last axis of ``x``; ``zi`` (sections, rows, 2) is updated."""
    y = np.empty_like(x)
    b0, b1, b2 = sos[:, 0], sos[:, 1], sos[:, 2]
    a1, a2 = sos[:, 4], sos[:, 5]
    for k in range(x.shape[1]):
        v = x[:, k]
        for s in range(sos.shape[0]):
            yv = b0[s] * v + zi[s, :, 0]
            zi[s, :, 0] = b1[s] * v - a1[s] * yv + zi[s, :, 1]
            zi[s, :, 1] = b2[s] * v - a2[s] * yv
            v = yv
        y[:, k] = v
    return y
