"""Feature-vector baselines: multinomial logistic regression and k-nearest neighbours."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionMismatch, EmptyDataset
from .layers import softmax
from .network import N_CLASSES, one_hot


class LogisticRegression:
    """Softmax regression fitted by full-batch gradient descent.

    Features are standardised with the training mean and standard deviation
    before fitting; ``l2`` penalises the weight matrix (not the bias).
    """

    def __init__(self, l2: float = 1e-2, lr: float = 0.5, epochs: int = 500, n_classes: int = N_CLASSES):
        self.l2 = l2
        self.lr = lr
        self.epochs = epochs
        self.n_classes = n_classes

    def fit(self, x: np.ndarray, y: np.ndarray) -> "LogisticRegression":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if x.ndim != 2 or len(x) != len(y):
            raise DimensionMismatch(f"X has shape {x.shape} but y has {len(y)} labels")
        if len(x) == 0:
            raise EmptyDataset("no training samples")
        self.mean_ = x.mean(axis=0)
        sd = x.std(axis=0)
        self.scale_ = np.where(sd > 0, sd, 1.0)
        z = (x - self.mean_) / self.scale_
        t = one_hot(y, self.n_classes)
        n, d = z.shape
        self.W_ = np.zeros((d, self.n_classes))
        self.b_ = np.zeros(self.n_classes)
        for _ in range(self.epochs):
            p = softmax(z @ self.W_ + self.b_)
            r = (p - t) / n
            self.W_ -= self.lr * (z.T @ r + 2 * self.l2 * self.W_)
            self.b_ -= self.lr * r.sum(axis=0)
        return self

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.W_.shape[0]:
            raise DimensionMismatch(f"expected {self.W_.shape[0]} features, got shape {x.shape}")
        return ((x - self.mean_) / self.scale_) @ self.W_ + self.b_

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.decision_function(x))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.predict_proba(x).argmax(axis=1)


def train_logreg(x: np.ndarray, y: np.ndarray, l2: float = 1e-2, lr: float = 0.5,
                 epochs: int = 500) -> LogisticRegression:
    return LogisticRegression(l2, lr, epochs).fit(x, y)


def _vote(labels: np.ndarray, dists: np.ndarray, n_classes: int) -> int:
    counts = np.bincount(labels, minlength=n_classes)
    tied = np.flatnonzero(counts == counts.max())
    if len(tied) == 1:
        return int(tied[0])
    # smallest mean neighbour distance, then lowest class index
    means = [dists[labels == c].mean() for c in tied]
    return int(tied[int(np.argmin(means))])


def knn_predict(x_train: np.ndarray, y_train: np.ndarray, x: np.ndarray, k: int = 5,
                n_classes: int = N_CLASSES) -> int:
    """Majority label among the ``k`` Euclidean nearest training points."""
    x_train = np.asarray(x_train, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be >= 1")
    if x_train.ndim != 2 or x.shape != (x_train.shape[1],) or len(x_train) != len(y_train):
        raise DimensionMismatch(f"train {x_train.shape}, labels {len(y_train)}, query {x.shape}")
    d = np.sqrt(((x_train - x) ** 2).sum(axis=1))
    k = min(k, len(d))
    nearest = np.argsort(d, kind="stable")[:k]
    return _vote(np.asarray(y_train)[nearest], d[nearest], n_classes)


class KNN:
    """k-NN classifier on standardised features; ``predict_proba`` returns vote shares."""

    def __init__(self, k: int = 5, n_classes: int = N_CLASSES):
        self.k = k
        self.n_classes = n_classes

    def fit(self, x: np.ndarray, y: np.ndarray) -> "KNN":
        x = np.asarray(x, dtype=np.float64)
        if len(x) == 0:
            raise EmptyDataset("no training samples")
        self.mean_ = x.mean(axis=0)
        sd = x.std(axis=0)
        self.scale_ = np.where(sd > 0, sd, 1.0)
        self.x_ = (x - self.mean_) / self.scale_
        self.y_ = np.asarray(y, dtype=np.int64)
        return self

    def _z(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean_) / self.scale_

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.array([knn_predict(self.x_, self.y_, row, self.k, self.n_classes) for row in self._z(x)],
                        dtype=np.int64)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        out = []
        k = min(self.k, len(self.x_))
        for row in self._z(x):
            d = np.sqrt(((self.x_ - row) ** 2).sum(axis=1))
            nearest = np.argsort(d, kind="stable")[:k]
            out.append(np.bincount(self.y_[nearest], minlength=self.n_classes) / k)
        return np.array(out)
