"""Mini-batch training with RMSprop, plateau LR reduction and early stopping."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, EmptyDataset, NumericalInstability
from .network import Network, NetworkSpec, build_network, one_hot
from .optim import RMSprop


@dataclass
class TrainConfig:
    batch_size: int = 8
    lr: float = 1e-3
    rho: float = 0.9
    eps: float = 1e-8
    plateau_factor: float = 0.5
    plateau_patience: int = 5
    min_lr: float = 1e-6
    early_stop_patience: int = 10
    min_delta: float = 1e-4
    max_epochs: int = 100
    seed: int = 0
    #: share of the training set held out for monitoring when no validation set is given
    val_fraction: float = 0.1

    def validate(self) -> "TrainConfig":
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be >= 1")
        positive = (self.lr, self.rho, self.eps, self.plateau_factor, self.min_lr)
        if min(positive) <= 0 or self.plateau_patience < 1 or self.early_stop_patience < 1:
            raise ConfigError("training hyperparameters must be positive")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("val_fraction must be in [0, 1)")
        return self

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown training keys: {sorted(unknown)}")
        return cls(**raw).validate()

    @classmethod
    def load(cls, path: str | Path) -> "TrainConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read training config {path}: {exc}") from None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    lr_events: list[tuple[int, float]] = field(default_factory=list)
    stop_epoch: int = 0
    best_epoch: int = 0
    early_stopped: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


class PlateauScheduler:
    """Scale the learning rate by ``factor`` after ``patience`` epochs without improvement."""

    def __init__(self, factor: float, patience: int, min_lr: float, min_delta: float):
        self.factor, self.patience, self.min_lr, self.min_delta = factor, patience, min_lr, min_delta
        self.best = math.inf
        self.wait = 0

    def step(self, value: float, lr: float) -> float:
        if value < self.best - self.min_delta:
            self.best = value
            self.wait = 0
            return lr
        self.wait += 1
        if self.wait >= self.patience:
            self.wait = 0
            return max(lr * self.factor, self.min_lr)
        return lr


class EarlyStopping:
    def __init__(self, patience: int, min_delta: float):
        self.patience, self.min_delta = patience, min_delta
        self.best = math.inf
        self.wait = 0
        self.improved = False

    def step(self, value: float) -> bool:
        """Record one epoch; returns True when training should stop."""
        self.improved = value < self.best - self.min_delta
        if self.improved:
            self.best = value
            self.wait = 0
            return False
        self.wait += 1
        return self.wait >= self.patience


def _check(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise NumericalInstability(f"{what} is not finite")
    return value


def evaluate(net: Network, x: np.ndarray, y: np.ndarray, batch_size: int = 64) -> tuple[float, float]:
    probs = net.predict_proba(x, batch_size)
    loss = net.loss(probs, one_hot(y))
    return loss, float(np.mean(probs.argmax(axis=1) == y))


def split_validation(y: np.ndarray, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Stratified (train_idx, val_idx) split taking ``fraction`` of every class."""
    rng = np.random.default_rng([seed, 1])
    train_idx, val_idx = [], []
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        k = int(round(fraction * len(idx)))
        k = min(k, len(idx) - 1)
        val_idx.extend(idx[:k])
        train_idx.extend(idx[k:])
    return np.sort(np.array(train_idx, dtype=np.int64)), np.sort(np.array(val_idx, dtype=np.int64))


def train(net_spec: NetworkSpec | Network, train_set: tuple[np.ndarray, np.ndarray],
          val_set: tuple[np.ndarray, np.ndarray] | None, cfg: TrainConfig) -> tuple[Network, History]:
    """Train from ``net_spec`` (or continue an existing network).

    Without ``val_set`` a stratified ``cfg.val_fraction`` of the training data
    is held out for monitoring. The weights with the best validation loss are
    restored before returning.
    """
    cfg.validate()
    x, y = np.asarray(train_set[0], dtype=np.float64), np.asarray(train_set[1], dtype=np.int64)
    if len(x) == 0:
        raise EmptyDataset("training set is empty")
    if val_set is None:
        if cfg.val_fraction > 0:
            tr, va = split_validation(y, cfg.val_fraction, cfg.seed)
            val_set = (x[va], y[va])
            x, y = x[tr], y[tr]
        else:
            val_set = (x, y)
    xv, yv = np.asarray(val_set[0], dtype=np.float64), np.asarray(val_set[1], dtype=np.int64)
    if len(xv) == 0:
        xv, yv = x, y

    net = net_spec if isinstance(net_spec, Network) else build_network(net_spec, cfg.seed)
    # dropout masks and batch order come from generators derived from the seed
    for layer in net.layers:
        if hasattr(layer, "rng"):
            layer.rng = np.random.default_rng([cfg.seed, 2])
    order_rng = np.random.default_rng([cfg.seed, 3])

    params = [p for _, p in net.parameters()]
    opt = RMSprop(params, cfg.lr, cfg.rho, cfg.eps)
    plateau = PlateauScheduler(cfg.plateau_factor, cfg.plateau_patience, cfg.min_lr, cfg.min_delta)
    stopper = EarlyStopping(cfg.early_stop_patience, cfg.min_delta)
    hist = History()
    best_weights = net.get_weights()
    targets = one_hot(y)

    for epoch in range(cfg.max_epochs):
        order = order_rng.permutation(len(x))
        losses, correct = [], 0
        for start in range(0, len(x), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            probs = net.forward(x[idx], "train")
            losses.append(_check(net.loss(probs, targets[idx]), "training loss") * len(idx))
            correct += int(np.sum(probs.argmax(axis=1) == y[idx]))
            grads = [g for _, g in net.backward(targets[idx])]
            opt.step(grads)
        hist.train_loss.append(float(np.sum(losses) / len(x)))
        hist.train_acc.append(correct / len(x))
        vloss, vacc = evaluate(net, xv, yv)
        _check(vloss, "validation loss")
        hist.val_loss.append(vloss)
        hist.val_acc.append(vacc)
        hist.lr.append(opt.lr)
        hist.stop_epoch = epoch

        stop = stopper.step(vloss)
        if stopper.improved:
            best_weights = net.get_weights()
            hist.best_epoch = epoch
        new_lr = plateau.step(vloss, opt.lr)
        if new_lr != opt.lr:
            hist.lr_events.append((epoch, new_lr))
            opt.lr = new_lr
        if stop:
            hist.early_stopped = True
            break

    net.set_weights(best_weights)
    return net, hist
