"""Gradient-descent machinery shared by the acoustic model and the conv LM."""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, TrainingDivergenceError


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float((g**2).sum()) for g in grads.values())))


def clip_gradients(grads: dict[str, np.ndarray], clip: float) -> tuple[dict, float]:
    """Rescale so the global norm is at most `clip`. Returns (grads, norm before)."""
    norm = global_norm(grads)
    if not np.isfinite(norm):
        raise TrainingDivergenceError(f"non-finite gradient norm {norm}")
    if norm > clip:
        scale = clip / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


class SgdOptimizer:
    """SGD with momentum and global gradient clipping.

    Classical momentum by default (m <- mu*m + g; p <- p - lr*m); with
    nesterov=True the update applies the lookahead form
    p <- p - lr*(g + mu*m) after the buffer update.
    """

    def __init__(self, lr: float, momentum: float = 0.9, clip: float = 0.2,
                 nesterov: bool = False):
        if lr < 0:
            raise ConfigurationError("learning rate must be non-negative")
        if clip <= 0:
            raise ConfigurationError("clip must be positive")
        self.lr = lr
        self.momentum = momentum
        self.clip = clip
        self.nesterov = nesterov
        self.buffers: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        """Update `params` in place; returns them for convenience."""
        grads, _ = clip_gradients(grads, self.clip)
        for key, p in params.items():
            g = grads[key]
            buf = self.buffers.get(key)
            if buf is None:
                buf = np.zeros_like(p)
                self.buffers[key] = buf
            buf *= self.momentum
            buf += g
            if self.nesterov:
                p -= self.lr * (g + self.momentum * buf)
            else:
                p -= self.lr * buf
        return params


def sgd_step(params, grads, optimizer: SgdOptimizer):
    """Single optimization step; see SgdOptimizer for the update rule."""
    return optimizer.step(params, grads)


class PlateauScheduler:
    """Halve the learning rate when validation loss stops improving."""

    def __init__(self, optimizer: SgdOptimizer, factor: float = 0.5,
                 patience: int = 2, min_lr: float = 1e-6):
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.best = np.inf
        self.stale = 0

    def update(self, validation_loss: float) -> float:
        if validation_loss < self.best - 1e-12:
            self.best = validation_loss
            self.stale = 0
        else:
            self.stale += 1
            if self.stale > self.patience:
                self.optimizer.lr = max(self.optimizer.lr * self.factor, self.min_lr)
                self.stale = 0
        return self.optimizer.lr
