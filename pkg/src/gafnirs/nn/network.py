"""Sequential network container, spec parsing and the training loss."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, NumericalInstability, ShapeMismatch
from .layers import BatchNorm, Dense, Layer, Softmax, layer_from_config

N_CLASSES = 3
LOG_EPS = 1e-12


def default_layers(n_dense: int = 64, dropout: float = 0.5) -> list[dict]:
    """Four conv/max-pool pairs, batchnorm, two dense layers, one dropout, softmax."""
    layers: list[dict] = []
    for f in (8, 16, 32, 64):
        layers.append({"type": "conv2d", "out_channels": f, "kernel": 3, "stride": 1,
                       "padding": "same", "relu": True})
        layers.append({"type": "maxpool", "window": 2})
    layers += [
        {"type": "batchnorm"},
        {"type": "flatten"},
        {"type": "dense", "units": n_dense, "activation": "relu"},
        {"type": "dropout", "rate": dropout},
        {"type": "dense", "units": N_CLASSES, "activation": "linear"},
        {"type": "softmax"},
    ]
    return layers


@dataclass
class NetworkSpec:
    """Layer list plus input shape ``(C, H, W)`` and L2 strength on kernels.

    JSON form::

        {"input_shape": [1, 64, 64], "l2_strength": 0.3,
         "layers": [{"type": "conv2d", "out_channels": 8, ...}, ...]}
    """

    layers: list[dict] = field(default_factory=default_layers)
    input_shape: tuple[int, ...] = (1, 64, 64)
    l2_strength: float = 0.3

    @classmethod
    def default(cls, size: int = 64, **kw) -> "NetworkSpec":
        return cls(default_layers(), (1, size, size), **kw)

    @classmethod
    def from_dict(cls, raw: dict) -> "NetworkSpec":
        try:
            return cls([dict(l) for l in raw["layers"]], tuple(int(v) for v in raw["input_shape"]),
                       float(raw.get("l2_strength", 0.3)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad network spec: {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> "NetworkSpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read network spec {path}: {exc}") from None

    def to_dict(self) -> dict:
        return {"input_shape": list(self.input_shape), "l2_strength": self.l2_strength,
                "layers": [dict(l) for l in self.layers]}

    def validate(self) -> "NetworkSpec":
        if not self.layers or self.layers[-1].get("type") != "softmax":
            raise ConfigError("the last layer must be softmax")
        if self.l2_strength < 0:
            raise ConfigError("l2_strength must be non-negative")
        build_network(self, seed=0)
        return self


class Network:
    def __init__(self, layers: list[Layer], input_shape: tuple[int, ...], l2_strength: float):
        self.layers = layers
        self.input_shape = tuple(input_shape)
        self.l2_strength = float(l2_strength)
        self._probs: np.ndarray | None = None

    # -- parameters -------------------------------------------------------
    def parameters(self) -> list[tuple[str, np.ndarray]]:
        return [(f"{i}.{k}", v) for i, l in enumerate(self.layers) for k, v in l.params.items()]

    def gradients(self) -> list[tuple[str, np.ndarray]]:
        return [(f"{i}.{k}", l.grads[k]) for i, l in enumerate(self.layers) for k in l.params]

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        return [(f"{i}.{k}", v) for i, l in enumerate(self.layers) for k, v in l.state.items()]

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        return self.parameters() + self.buffers()

    def get_weights(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.state_arrays()}

    def set_weights(self, weights: dict[str, np.ndarray]) -> None:
        for i, l in enumerate(self.layers):
            for store in (l.params, l.state):
                for k in store:
                    key = f"{i}.{k}"
                    if key not in weights:
                        raise ShapeMismatch(f"missing array {key}")
                    if weights[key].shape != store[k].shape:
                        raise ShapeMismatch(f"array {key}: shape {weights[key].shape} != {store[k].shape}")
                    store[k][...] = weights[key]

    def kernels(self) -> list[np.ndarray]:
        return [l.params[k] for l in self.layers for k in l.kernel_params]

    # -- computation --------------------------------------------------------
    def forward(self, x: np.ndarray, mode: str = "eval") -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise ShapeMismatch(f"input shape {x.shape[1:]} != network input {self.input_shape}")
        train = mode == "train"
        for layer in self.layers:
            x = layer.forward(x, train)
        self._probs = x
        return x

    def l2_penalty(self) -> float:
        return self.l2_strength * float(sum(np.sum(w * w) for w in self.kernels()))

    def loss(self, probs: np.ndarray, onehot: np.ndarray) -> float:
        """Mean categorical cross-entropy plus L2 on kernels."""
        ce = -np.sum(onehot * np.log(probs + LOG_EPS), axis=1).mean()
        return float(ce) + self.l2_penalty()

    def backward(self, onehot: np.ndarray) -> list[tuple[str, np.ndarray]]:
        """Gradients of :meth:`loss` for the last forward pass.

        Softmax and cross-entropy are differentiated together, giving
        ``(p - y) / batch`` at the logits.
        """
        if self._probs is None:
            raise RuntimeError("backward called before forward")
        n = onehot.shape[0]
        start = len(self.layers) - 1
        if isinstance(self.layers[-1], Softmax):
            grad = (self._probs - onehot) / n
        else:
            grad = -onehot / (self._probs + LOG_EPS) / n
            start += 1
        for layer in reversed(self.layers[:start]):
            grad = layer.backward(grad)
            if grad is None:
                break
        for layer in self.layers:
            for k in layer.kernel_params:
                layer.grads[k] = layer.grads[k] + 2.0 * self.l2_strength * layer.params[k]
        grads = self.gradients()
        for name, g in grads:
            if not np.all(np.isfinite(g)):
                raise NumericalInstability(f"non-finite gradient in {name}")
        return grads

    def predict_proba(self, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
        out = [self.forward(x[i:i + batch_size], "eval") for i in range(0, len(x), batch_size)]
        return np.vstack(out) if out else np.empty((0, N_CLASSES))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.predict_proba(x).argmax(axis=1)

    def batchnorm_layers(self) -> list[BatchNorm]:
        return [l for l in self.layers if isinstance(l, BatchNorm)]


def build_network(spec: NetworkSpec, seed: int = 0) -> Network:
    """Instantiate and initialise a network; raises ShapeMismatch on incompatible layers."""
    rng = np.random.default_rng(seed)
    layers = [layer_from_config(c) for c in spec.layers]
    shape = tuple(spec.input_shape)
    for layer in layers:
        shape = layer.build(shape, rng)
    if shape != (N_CLASSES,):
        raise ShapeMismatch(f"network output shape {shape}, expected ({N_CLASSES},)")
    if not isinstance(layers[-1], Softmax):
        raise ConfigError("the last layer must be softmax")
    last_dense = [l for l in layers if isinstance(l, Dense)]
    if not last_dense or last_dense[-1].units != N_CLASSES:
        raise ConfigError("the final dense layer must have 3 units")
    # the first trainable layer never needs an input gradient
    for layer in layers:
        if layer.params:
            layer.needs_input_grad = False
            break
    return Network(layers, tuple(spec.input_shape), spec.l2_strength)


def one_hot(labels, n_classes: int = N_CLASSES) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out
