"""RMSprop."""

from __future__ import annotations

import numpy as np


def rmsprop_step(params: list[np.ndarray], grads: list[np.ndarray], state: list[np.ndarray],
                 lr: float, rho: float = 0.9, eps: float = 1e-8) -> None:
    """In-place update: v <- rho v + (1 - rho) g^2;  theta <- theta - lr g / (sqrt(v) + eps)."""
    for p, g, v in zip(params, grads, state):
        v *= rho
        v += (1.0 - rho) * g * g
        p -= lr * g / (np.sqrt(v) + eps)


class RMSprop:
    def __init__(self, params: list[np.ndarray], lr: float = 1e-3, rho: float = 0.9, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.rho = rho
        self.eps = eps
        self.state = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        rmsprop_step(self.params, grads, self.state, self.lr, self.rho, self.eps)
