"""Sensitivity sweeps over measurement noise and PMU placement."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..grid.noise import inject_noise
from .metrics import evaluate_arrays

log = logging.getLogger(__name__)

AXES = ("snr_db", "pmu_subset", "pmu_count")


@dataclass
class SweepPoint:
    setting: object
    per_level_accuracy: list
    ensemble_accuracy: float
    per_level_min: list = field(default_factory=list)
    per_level_max: list = field(default_factory=list)
    ensemble_min: float = float("nan")
    ensemble_max: float = float("nan")
    error: str | None = None


@dataclass
class SweepReport:
    axis: str
    n_levels: int
    points: list = field(default_factory=list)
    seeds: list = field(default_factory=list)


def _correct(cm):
    return cm.true_positive + cm.true_negative


def _aggregate(setting, runs):
    # means come from pooled integer counts, so identical runs reproduce the
    # single-run accuracy exactly
    total = sum(r.ensemble.total for r in runs)
    n_levels = len(runs[0].per_level)
    per_mean = [sum(_correct(r.per_level[k]) for r in runs) / total for k in range(n_levels)]
    per = np.array([r.per_level_accuracy for r in runs])
    ens = [r.ensemble.accuracy for r in runs]
    return SweepPoint(setting, per_mean, sum(_correct(r.ensemble) for r in runs) / total,
                      per.min(axis=0).tolist(), per.max(axis=0).tolist(),
                      float(min(ens)), float(max(ens)))


def _failed(setting, n_levels, exc):
    nan = [math.nan] * n_levels
    return SweepPoint(setting, nan, math.nan, nan, nan, error=f"{type(exc).__name__}: {exc}")


def _sort_key(snr):
    return math.inf if snr is None else snr


def noise_sweep(model, dataset, snr_list, seeds=(0, 1, 2), split="test") -> SweepReport:
    """Accuracy under additive white Gaussian noise at each SNR (dB).

    Noise for sample ``i`` at seed ``s`` is drawn from ``(s, i)``; ``inf``
    leaves the samples untouched, so that point equals the clean evaluation.
    """
    idx = dataset.indices(split)
    if not idx:
        raise ValueError(f"split {split!r} is empty")
    labels = np.array([dataset.samples[i].label for i in idx])
    report = SweepReport("snr_db", model.n_levels, seeds=list(seeds))
    for snr in sorted(snr_list, key=_sort_key):
        try:
            runs = []
            for s in seeds:
                x = np.stack([inject_noise(dataset.samples[i], snr, [s, i]).measured for i in idx])
                runs.append(evaluate_arrays(model, x, labels, dataset.sample_rate))
            report.points.append(_aggregate(snr, runs))
        except Exception as exc:  # a failed point is recorded, the sweep continues
            log.warning("noise sweep point %s failed: %s", snr, exc)
            report.points.append(_failed(snr, model.n_levels, exc))
    return report


def _check_subsets(dataset, subsets):
    for sub in subsets:
        if len(sub) == 0:
            raise ConfigError("PMU subset must be nonempty")
        for p in sub:
            if not 0 <= p < len(dataset.channels):
                raise ConfigError(
                    f"PMU subset index {p} outside 0..{len(dataset.channels) - 1}"
                )


def placement_sweep(model_factory, dataset, subsets, split="test", axis="pmu_subset",
                    n_levels=None) -> SweepReport:
    """Retrain via ``model_factory(dataset_subset)`` for each channel subset and evaluate.

    Subsets are lists of channel positions in ``dataset.channels``.
    """
    subsets = [list(s) for s in subsets]
    _check_subsets(dataset, subsets)
    report = SweepReport(axis, n_levels or 0)
    for sub in subsets:
        setting = len(sub) if axis == "pmu_count" else tuple(dataset.channels[p] + 1 for p in sub)
        try:
            part = dataset.select_channels(sub)
            model = model_factory(part)
            report.n_levels = model.n_levels
            idx = part.indices(split)
            x = np.stack([part.samples[i].measured for i in idx])
            y = np.array([part.samples[i].label for i in idx])
            report.points.append(_aggregate(setting, [evaluate_arrays(model, x, y, part.sample_rate)]))
        except ConfigError:
            raise
        except Exception as exc:
            log.warning("placement sweep point %s failed: %s", setting, exc)
            report.points.append(_failed(setting, report.n_levels, exc))
    if axis == "pmu_count":
        report.points.sort(key=lambda p: p.setting)
    return report


def count_subsets(n_channels, counts):
    """Leading-channel subsets for a PMU-count sweep."""
    return [list(range(c)) for c in counts if 1 <= c <= n_channels]
