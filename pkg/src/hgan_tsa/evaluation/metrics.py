"""Confusion matrices and per-level / ensemble evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..hgan import HganModel, assess


@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary confusion counts with stable (label 1) as the positive class."""

    true_positive: int = 0
    true_negative: int = 0
    false_positive: int = 0
    false_negative: int = 0

    @classmethod
    def from_labels(cls, y_true, y_pred):
        t = np.asarray(y_true, dtype=int)
        p = np.asarray(y_pred, dtype=int)
        if t.shape != p.shape:
            raise ValueError(f"label shapes differ: {t.shape} vs {p.shape}")
        return cls(
            int(np.sum((t == 1) & (p == 1))),
            int(np.sum((t == 0) & (p == 0))),
            int(np.sum((t == 0) & (p == 1))),
            int(np.sum((t == 1) & (p == 0))),
        )

    @property
    def total(self) -> int:
        return self.true_positive + self.true_negative + self.false_positive + self.false_negative

    @property
    def accuracy(self) -> float:
        return (self.true_positive + self.true_negative) / self.total if self.total else float("nan")

    def to_dict(self):
        return {"tp": self.true_positive, "tn": self.true_negative, "fp": self.false_positive,
                "fn": self.false_negative, "total": self.total, "accuracy": self.accuracy}


@dataclass
class EvaluationResult:
    per_level: list
    ensemble: ConfusionMatrix
    mean_response_time: float  # seconds of computation per assessment
    response_cycles: float  # one PMU frame interval plus computation, in cycles
    probabilities: np.ndarray  # (samples, levels)
    predictions: np.ndarray  # final labels

    @property
    def per_level_accuracy(self):
        return [cm.accuracy for cm in self.per_level]


def evaluate_arrays(model: HganModel, measured, labels, sample_rate=120.0,
                    base_frequency=60.0) -> EvaluationResult:
    """Assess every measured (per-unit) sample and tabulate the outcomes."""
    x = np.asarray(measured, dtype=float)
    y = np.asarray(labels, dtype=int)
    if x.shape[0] == 0:
        raise ValueError("evaluation split is empty")
    verdicts = [assess(row, model) for row in x]
    probs = np.stack([v.per_level_probabilities for v in verdicts])
    votes = np.stack([v.per_level_votes for v in verdicts])
    final = np.array([v.final_label for v in verdicts], dtype=int)
    per_level = [ConfusionMatrix.from_labels(y, votes[:, k]) for k in range(votes.shape[1])]
    elapsed = float(np.mean([v.elapsed for v in verdicts]))
    cycles = (elapsed + 1.0 / sample_rate) * base_frequency
    return EvaluationResult(per_level, ConfusionMatrix.from_labels(y, final), elapsed,
                            cycles, probs, final)


def evaluate(model: HganModel, dataset, split="test") -> EvaluationResult:
    idx = dataset.indices(split)
    if not idx:
        raise ValueError(f"split {split!r} is empty")
    x = np.stack([dataset.samples[i].measured for i in idx])
    y = np.array([dataset.samples[i].label for i in idx], dtype=int)
    return evaluate_arrays(model, x, y, dataset.sample_rate)
