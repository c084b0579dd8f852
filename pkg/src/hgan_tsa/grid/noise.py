"""White Gaussian measurement noise at a fixed signal-to-noise ratio."""

import math
from dataclasses import replace

import numpy as np

NO_NOISE = math.inf


def add_noise(values, snr_db, rng):
    """Add zero-mean noise per column with variance mean(x**2) / 10**(snr/10)."""
    x = np.asarray(values, dtype=float)
    if math.isinf(snr_db) and snr_db > 0:
        return x.copy()
    power = np.mean(x ** 2, axis=0)
    sigma = np.sqrt(power / 10.0 ** (snr_db / 10.0))
    return x + rng.standard_normal(x.shape) * sigma


def inject_noise(sample, snr_db, seed):
    """Copy of a TransientSample with noisy voltages; ``snr_db=inf`` is a no-op."""
    rng = np.random.default_rng(seed)
    return replace(sample, voltages=add_noise(sample.voltages, snr_db, rng))
