"""Scalar losses returning ``(value, gradient)``; batch losses are means."""

import numpy as np

from ..errors import ShapeError

EPS = 1e-12


def _clamp(p):
    return np.clip(p, EPS, 1.0 - EPS)


def bce_loss(p, y):
    """Mean binary cross-entropy -[y ln p + (1-y) ln(1-p)] and d/dp."""
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    if p.shape != y.shape:
        raise ShapeError(f"bce_loss: p {p.shape} vs y {y.shape}")
    pc = _clamp(p)
    n = max(p.size, 1)
    loss = -np.sum(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)) / n
    grad = (pc - y) / (pc * (1.0 - pc)) / n
    return float(loss), grad


def mse_loss(x_hat, x):
    """Mean of squared element differences and d/dx_hat."""
    x_hat = np.asarray(x_hat, dtype=float)
    x = np.asarray(x, dtype=float)
    if x_hat.shape != x.shape:
        raise ShapeError(f"mse_loss: x_hat {x_hat.shape} vs x {x.shape}")
    d = x_hat - x
    n = max(d.size, 1)
    return float(np.sum(d * d) / n), 2.0 * d / n


def discriminator_loss(d_real, d_fake):
    """Mean of -[ln D(x) + ln(1 - D(x_hat))] and its gradients w.r.t. both scores."""
    d_real = np.asarray(d_real, dtype=float)
    d_fake = np.asarray(d_fake, dtype=float)
    r, f = _clamp(d_real), _clamp(d_fake)
    n = max(d_real.size, 1)
    loss = -np.sum(np.log(r) + np.log(1.0 - f)) / n
    return float(loss), -1.0 / r / n, 1.0 / (1.0 - f) / n


def adversarial_loss(d_fake, non_saturating=False):
    """Generator's adversarial term: mean ln(1 - D(x_hat)), or -ln D(x_hat)."""
    d_fake = np.asarray(d_fake, dtype=float)
    f = _clamp(d_fake)
    n = max(d_fake.size, 1)
    if non_saturating:
        return float(-np.sum(np.log(f)) / n), -1.0 / f / n
    return float(np.sum(np.log(1.0 - f)) / n), -1.0 / (1.0 - f) / n
