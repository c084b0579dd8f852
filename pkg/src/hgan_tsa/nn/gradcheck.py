"""Central finite-difference gradient checker."""

from dataclasses import dataclass

import numpy as np

# |a - n| / max(|a|, |n|, REL_FLOOR); the floor keeps entries whose true
# gradient is ~0 from dominating through rounding noise
REL_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: tuple
    checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def relative_error(a, n, floor=REL_FLOOR):
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def numerical_gradient(loss_fn, array, eps=1e-5):
    """d loss / d array by central differences, perturbing ``array`` in place."""
    g = np.zeros_like(array)
    it = np.nditer(array, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = array[i]
        array[i] = old + eps
        fp = loss_fn()
        array[i] = old - eps
        fm = loss_fn()
        array[i] = old
        g[i] = (fp - fm) / (2.0 * eps)
    return g


def grad_check(loss_fn, params, analytic, eps=1e-5, tolerance=1e-4, max_params=1000):
    """Compare ``analytic`` gradients with central differences of ``loss_fn``.

    ``params`` maps names to arrays that ``loss_fn`` reads (they are perturbed
    in place and restored); ``analytic`` maps the same names to gradients.
    """
    total = sum(v.size for v in params.values())
    if total > max_params:
        raise ValueError(f"fragment has {total} parameters, limit {max_params}")
    worst, worst_name, worst_idx = 0.0, "", ()
    for name, arr in params.items():
        num = numerical_gradient(loss_fn, arr, eps)
        err = relative_error(analytic[name], num)
        if err.size and err.max() > worst:
            worst = float(err.max())
            worst_name = name
            worst_idx = np.unravel_index(int(err.argmax()), err.shape)
    return GradCheckReport(worst, worst_name, tuple(int(i) for i in worst_idx), total, tolerance)
