"""Plain stochastic gradient descent with global-norm clipping."""

import logging

import numpy as np

log = logging.getLogger(__name__)


def global_norm(grads) -> float:
    return float(np.sqrt(sum(np.sum(g * g) for g in grads.values())))


def clip_by_global_norm(grads, clip_norm):
    """Scale ``grads`` so their joint L2 norm is at most ``clip_norm``."""
    if clip_norm is None or clip_norm <= 0:
        return grads
    norm = global_norm(grads)
    if norm <= clip_norm:
        return grads
    scale = clip_norm / norm
    return {k: g * scale for k, g in grads.items()}


def sgd_step(params, grads, learning_rate, clip_norm=None):
    """Return updated copies ``theta - lr * clip(g)``; non-finite grads leave params as-is."""
    if learning_rate < 0:
        raise ValueError("learning_rate must be >= 0")
    if not all(np.all(np.isfinite(g)) for g in grads.values()):
        return {k: v.copy() for k, v in params.items()}
    grads = clip_by_global_norm(grads, clip_norm)
    return {k: v - learning_rate * grads[k] if k in grads else v.copy()
            for k, v in params.items()}


class SGD:
    """In-place SGD over a model exposing ``named_params()`` and ``touch()``."""

    def __init__(self, learning_rate, clip_norm=5.0):
        self.learning_rate = learning_rate
        self.clip_norm = clip_norm
        self.skipped = 0

    def step(self, model, grads):
        if not all(np.all(np.isfinite(g)) for g in grads.values()):
            self.skipped += 1
            log.warning("non-finite gradient, update skipped (%d so far)", self.skipped)
            return False
        if self.learning_rate == 0:
            return True
        grads = clip_by_global_norm(grads, self.clip_norm)
        params = model.named_params()
        for name, g in grads.items():
            params[name] -= self.learning_rate * g
        model.touch()
        return True
