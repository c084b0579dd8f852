"""CART decision-tree baseline on the single measured sample.

Splits minimize weighted Gini impurity. Candidate thresholds are midpoints
between consecutive distinct feature values; ties go to the lowest feature
index and then the lowest threshold, so the fitted tree does not depend on
row order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class TreeNode:
    counts: tuple  # (unstable, stable)
    depth: int
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self):
        return self.feature is None

    @property
    def label(self):
        # ties resolve to unstable
        return 1 if self.counts[1] > self.counts[0] else 0

    def max_depth(self):
        if self.is_leaf:
            return self.depth
        return max(self.left.max_depth(), self.right.max_depth())


def gini(counts) -> float:
    n = sum(counts)
    if n == 0:
        return 0.0
    return 1.0 - sum((c / n) ** 2 for c in counts)


def best_split(x, y, min_leaf=1):
    """(feature, threshold, weighted impurity) of the best split, or None."""
    n, d = x.shape
    total_pos = int(y.sum())
    best = None
    for f in range(d):
        order = np.argsort(x[:, f], kind="stable")
        xs, ys = x[order, f], y[order]
        pos_left = np.cumsum(ys)[:-1]
        n_left = np.arange(1, n)
        valid = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not valid.any():
            continue
        nl = n_left[valid].astype(float)
        pl = pos_left[valid].astype(float)
        nr = n - nl
        pr = total_pos - pl
        g_left = 1.0 - (pl / nl) ** 2 - ((nl - pl) / nl) ** 2
        g_right = 1.0 - (pr / nr) ** 2 - ((nr - pr) / nr) ** 2
        score = (nl * g_left + nr * g_right) / n
        k = int(np.argmin(score))  # first minimum = lowest threshold
        thr = 0.5 * (xs[1:][valid][k] + xs[:-1][valid][k])
        if best is None or score[k] < best[2] - 1e-15:
            best = (f, float(thr), float(score[k]))
    return best


def train_tree(x, y, max_depth=12, min_leaf=1) -> TreeNode:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=int)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("training split is empty")
    if y.shape != (x.shape[0],):
        raise ValueError("labels do not match samples")
    return _grow(x, y, 0, max_depth, min_leaf)


def _grow(x, y, depth, max_depth, min_leaf):
    counts = (int((y == 0).sum()), int((y == 1).sum()))
    node = TreeNode(counts, depth)
    if depth >= max_depth or counts[0] == 0 or counts[1] == 0:
        return node
    split = best_split(x, y, min_leaf)
    if split is None or split[2] >= gini(counts) - 1e-15:
        return node
    f, thr, _ = split
    mask = x[:, f] <= thr
    node.feature, node.threshold = f, thr
    node.left = _grow(x[mask], y[mask], depth + 1, max_depth, min_leaf)
    node.right = _grow(x[~mask], y[~mask], depth + 1, max_depth, min_leaf)
    return node


def predict_tree(tree: TreeNode, sample) -> int:
    node = tree
    while not node.is_leaf:
        node = node.left if sample[node.feature] <= node.threshold else node.right
    return node.label


def predict_many(tree: TreeNode, x) -> np.ndarray:
    return np.array([predict_tree(tree, row) for row in np.asarray(x, dtype=float)], dtype=int)
