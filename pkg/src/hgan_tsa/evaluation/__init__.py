"""Metrics, sensitivity sweeps, decision-tree baseline and report files."""

from .metrics import ConfusionMatrix, EvaluationResult, evaluate, evaluate_arrays
from .report import ReportInputs, emit_report
from .sweeps import SweepPoint, SweepReport, count_subsets, noise_sweep, placement_sweep
from .tree import TreeNode, predict_many, predict_tree, train_tree

__all__ = [
    "ConfusionMatrix", "EvaluationResult", "evaluate", "evaluate_arrays",
    "ReportInputs", "emit_report", "SweepPoint", "SweepReport", "count_subsets",
    "noise_sweep", "placement_sweep", "TreeNode", "predict_many", "predict_tree", "train_tree",
]
