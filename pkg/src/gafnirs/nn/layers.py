"""Layers operating on float64 numpy arrays in NCHW layout.

Every layer caches what its backward pass needs during ``forward`` and
writes parameter gradients into ``self.grads`` during ``backward``.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import ShapeMismatch


class Layer:
    kind = "layer"
    #: parameter names that count as kernels for the L2 penalty
    kernel_params: tuple[str, ...] = ()

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.state: dict[str, np.ndarray] = {}
        self.input_shape: tuple[int, ...] | None = None
        self.output_shape: tuple[int, ...] | None = None
        self.needs_input_grad = True

    def build(self, input_shape: tuple[int, ...], rng: np.random.Generator) -> tuple[int, ...]:
        self.input_shape = tuple(input_shape)
        self.output_shape = self.input_shape
        return self.output_shape

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray | None:
        raise NotImplementedError

    def config(self) -> dict:
        return {"type": self.kind}


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Conv2D(Layer):
    kind = "conv2d"
    kernel_params = ("W",)

    def __init__(self, out_channels: int, kernel: int = 3, stride: int = 1,
                 padding: str | int = "same", relu: bool = True):
        super().__init__()
        self.out_channels = int(out_channels)
        self.kernel = int(kernel)
        self.stride = int(stride)
        self.padding = padding
        self.relu = bool(relu)

    @property
    def pad(self) -> int:
        if self.padding == "same":
            return (self.kernel - 1) // 2
        if self.padding == "valid":
            return 0
        return int(self.padding)

    def build(self, input_shape, rng):
        if len(input_shape) != 3:
            raise ShapeMismatch(f"conv2d expects (C, H, W) input, got {input_shape}")
        c, h, w = input_shape
        k, p, s = self.kernel, self.pad, self.stride
        oh, ow = (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1
        if oh < 1 or ow < 1:
            raise ShapeMismatch(f"conv2d kernel {k} does not fit input {input_shape}")
        f = self.out_channels
        self.params = {
            "W": glorot_uniform(rng, (f, c, k, k), c * k * k, f * k * k),
            "b": np.zeros(f),
        }
        self.input_shape = tuple(input_shape)
        self.output_shape = (f, oh, ow)
        return self.output_shape

    def forward(self, x, train):
        n = x.shape[0]
        k, p, s = self.kernel, self.pad, self.stride
        cols = kernels.im2col(np.ascontiguousarray(x), k, k, s, p)
        wm = self.params["W"].reshape(self.out_channels, -1)
        f, oh, ow = self.output_shape
        out = cols @ wm.T
        out += self.params["b"]
        out = out.reshape(n, oh, ow, f).transpose(0, 3, 1, 2)
        if self.relu:
            out = np.maximum(out, 0.0)
        out = np.ascontiguousarray(out)
        self._cache = (x.shape, cols, out if self.relu else None)
        return out

    def backward(self, dy):
        x_shape, cols, out = self._cache
        if self.relu:
            dy = dy * (out > 0)
        f = self.out_channels
        dyr = dy.transpose(0, 2, 3, 1).reshape(-1, f)
        self.grads["W"] = (dyr.T @ cols).reshape(self.params["W"].shape)
        self.grads["b"] = dyr.sum(axis=0)
        if not self.needs_input_grad:
            return None
        dcols = np.ascontiguousarray(dyr @ self.params["W"].reshape(f, -1))
        k = self.kernel
        return kernels.col2im(dcols, tuple(x_shape), k, k, self.stride, self.pad)

    def config(self):
        return {"type": self.kind, "out_channels": self.out_channels, "kernel": self.kernel,
                "stride": self.stride, "padding": self.padding, "relu": self.relu}


class MaxPool2D(Layer):
    kind = "maxpool"

    def __init__(self, window: int = 2, stride: int | None = None):
        super().__init__()
        self.window = int(window)
        self.stride = int(stride) if stride else self.window

    def build(self, input_shape, rng):
        if len(input_shape) != 3:
            raise ShapeMismatch(f"maxpool expects (C, H, W) input, got {input_shape}")
        c, h, w = input_shape
        oh, ow = (h - self.window) // self.stride + 1, (w - self.window) // self.stride + 1
        if oh < 1 or ow < 1:
            raise ShapeMismatch(f"maxpool window {self.window} does not fit input {input_shape}")
        self.input_shape = tuple(input_shape)
        self.output_shape = (c, oh, ow)
        return self.output_shape

    def forward(self, x, train):
        out, idx = kernels.maxpool_forward(np.ascontiguousarray(x), self.window, self.stride)
        self._cache = (x.shape, idx)
        return out

    def backward(self, dy):
        x_shape, idx = self._cache
        return kernels.maxpool_backward(np.ascontiguousarray(dy), idx, tuple(x_shape))

    def config(self):
        return {"type": self.kind, "window": self.window, "stride": self.stride}


class BatchNorm(Layer):
    """Per-channel (4-D input) or per-feature (2-D input) batch normalisation."""

    kind = "batchnorm"

    def __init__(self, momentum: float = 0.9, eps: float = 1e-5):
        super().__init__()
        self.momentum = float(momentum)
        self.eps = float(eps)

    def build(self, input_shape, rng):
        c = input_shape[0]
        self.params = {"gamma": np.ones(c), "beta": np.zeros(c)}
        self.state = {"running_mean": np.zeros(c), "running_var": np.ones(c)}
        self.input_shape = self.output_shape = tuple(input_shape)
        return self.output_shape

    def _axes(self, x):
        return (0, 2, 3) if x.ndim == 4 else (0,)

    def _bcast(self, v, x):
        return v.reshape(1, -1, 1, 1) if x.ndim == 4 else v.reshape(1, -1)

    def forward(self, x, train):
        axes = self._axes(x)
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            self.state["running_mean"] = m * self.state["running_mean"] + (1 - m) * mean
            self.state["running_var"] = m * self.state["running_var"] + (1 - m) * var
        else:
            mean, var = self.state["running_mean"], self.state["running_var"]
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - self._bcast(mean, x)) * self._bcast(inv, x)
        self._cache = (xhat, inv, axes)
        return self._bcast(self.params["gamma"], x) * xhat + self._bcast(self.params["beta"], x)

    def normalized(self) -> np.ndarray:
        """Normalised activations of the last forward pass (before scale/shift)."""
        return self._cache[0]

    def backward(self, dy):
        xhat, inv, axes = self._cache
        m = dy.size // dy.shape[1]
        self.grads["gamma"] = (dy * xhat).sum(axis=axes)
        self.grads["beta"] = dy.sum(axis=axes)
        dxhat = dy * self._bcast(self.params["gamma"], dy)
        s1 = self._bcast(dxhat.sum(axis=axes), dy)
        s2 = self._bcast((dxhat * xhat).sum(axis=axes), dy)
        return self._bcast(inv, dy) * (dxhat - s1 / m - xhat * s2 / m)

    def config(self):
        return {"type": self.kind, "momentum": self.momentum, "eps": self.eps}


class Flatten(Layer):
    kind = "flatten"

    def build(self, input_shape, rng):
        self.input_shape = tuple(input_shape)
        self.output_shape = (int(np.prod(input_shape)),)
        return self.output_shape

    def forward(self, x, train):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Dense(Layer):
    kind = "dense"
    kernel_params = ("W",)

    def __init__(self, units: int, activation: str = "linear"):
        super().__init__()
        if activation not in ("linear", "relu"):
            raise ValueError(f"unsupported activation {activation!r}")
        self.units = int(units)
        self.activation = activation

    def build(self, input_shape, rng):
        if len(input_shape) != 1:
            raise ShapeMismatch(f"dense expects flat input, got {input_shape}; add a flatten layer")
        d = input_shape[0]
        self.params = {"W": glorot_uniform(rng, (d, self.units), d, self.units),
                       "b": np.zeros(self.units)}
        self.input_shape = tuple(input_shape)
        self.output_shape = (self.units,)
        return self.output_shape

    def forward(self, x, train):
        out = x @ self.params["W"] + self.params["b"]
        if self.activation == "relu":
            out = np.maximum(out, 0.0)
        self._cache = (x, out)
        return out

    def backward(self, dy):
        x, out = self._cache
        if self.activation == "relu":
            dy = dy * (out > 0)
        self.grads["W"] = x.T @ dy
        self.grads["b"] = dy.sum(axis=0)
        if not self.needs_input_grad:
            return None
        return dy @ self.params["W"].T

    def config(self):
        return {"type": self.kind, "units": self.units, "activation": self.activation}


class Dropout(Layer):
    """Inverted dropout; identity in eval mode."""

    kind = "dropout"

    def __init__(self, rate: float = 0.5):
        super().__init__()
        if not 0 <= rate < 1:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = float(rate)
        self.rng: np.random.Generator | None = None

    def build(self, input_shape, rng):
        self.rng = rng
        return super().build(input_shape, rng)

    def forward(self, x, train):
        if not train or self.rate == 0:
            self._mask = None
            return x
        keep = self.rng.random(x.shape) >= self.rate
        self._mask = keep / (1.0 - self.rate)
        return x * self._mask

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask

    def config(self):
        return {"type": self.kind, "rate": self.rate}


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Softmax(Layer):
    kind = "softmax"

    def forward(self, x, train):
        self._p = softmax(x)
        return self._p

    def backward(self, dy):
        p = self._p
        return p * (dy - (dy * p).sum(axis=-1, keepdims=True))


LAYER_TYPES = {cls.kind: cls for cls in (Conv2D, MaxPool2D, BatchNorm, Flatten, Dense, Dropout, Softmax)}


def layer_from_config(cfg: dict) -> Layer:
    cfg = dict(cfg)
    kind = cfg.pop("type")
    try:
        cls = LAYER_TYPES[kind]
    except KeyError:
        raise ValueError(f"unknown layer type {kind!r}") from None
    return cls(**cfg)
