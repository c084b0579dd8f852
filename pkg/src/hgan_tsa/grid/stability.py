"""Rotor-angle stability index and labels."""

import numpy as np

from ..errors import StabilityIndexError


def max_angle_separation(rotor_angles) -> float:
    """Largest |delta_i - delta_j| over all rows and machine pairs, in degrees."""
    a = np.asarray(rotor_angles, dtype=float)
    if a.ndim != 2 or a.shape[1] < 2:
        raise StabilityIndexError(
            "stability index needs at least two machines (rows = time, cols = machines)"
        )
    if a.shape[0] == 0:
        raise StabilityIndexError("stability index needs at least one time row")
    spread = a.max(axis=1) - a.min(axis=1)
    return float(spread.max())


def eta_from_separation(separation_deg: float) -> float:
    return (360.0 - separation_deg) / (360.0 + separation_deg)


def stability_index(rotor_angles) -> float:
    """eta = (360 - ds_max) / (360 + ds_max), ds_max from post-fault angles in degrees."""
    return eta_from_separation(max_angle_separation(rotor_angles))


def label(eta: float) -> int:
    """1 (stable) iff eta > 0."""
    return 1 if eta > 0 else 0
