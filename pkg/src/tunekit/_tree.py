"""Binary CART trees grown best-first (leaf budget) or depth-first (depth cap).

Impurity is variance*count (sum of squared errors) for regression and
Gini*count for classification.  Split candidates are midpoints between
consecutive distinct sorted feature values; a split is accepted only if it
reduces total impurity.  All tie-breaks are deterministic: within a leaf the
lower feature index then lower threshold wins, across leaves the earliest
created leaf wins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Gains below this are treated as zero so float noise never drives a split.
GAIN_EPS = 1e-12

REGRESSION = "regression"
CLASSIFICATION = "classification"


@dataclass(frozen=True)
class Tree:
    """Flattened tree in preorder: node 0 is the root.

    ``feature[i] == -1`` marks a leaf whose prediction is ``value[i]``
    (mean target for regression, class code for classification).  Internal
    nodes route rows with x[feature] <= threshold to ``left``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))


def predict_tree(tree: Tree, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0], dtype=np.float64)
    feature, threshold = tree.feature, tree.threshold
    left, right, value = tree.left, tree.right, tree.value
    for i in range(X.shape[0]):
        node = 0
        f = feature[node]
        while f >= 0:
            node = left[node] if X[i, f] <= threshold[node] else right[node]
            f = feature[node]
        out[i] = value[node]
    return out


def _leaf_value(y: np.ndarray, mode: str, n_classes: int) -> float:
    if mode == REGRESSION:
        return float(y.mean())
    counts = np.bincount(y.astype(np.int64), minlength=n_classes)
    return float(np.argmax(counts))  # argmax takes the smallest code on ties


def _node_impurity(y: np.ndarray, mode: str, n_classes: int) -> float:
    m = y.size
    if mode == REGRESSION:
        return float(np.sum(y * y) - (np.sum(y) ** 2) / m)
    counts = np.bincount(y.astype(np.int64), minlength=n_classes)
    return float(m - np.sum(counts.astype(np.float64) ** 2) / m)


def _best_split(X, y, rows, features, mode, n_classes):
    """Best (gain, feature, threshold) over eligible features, or None.

    Gain is the drop in total impurity.  Candidate thresholds sit midway
    between consecutive distinct sorted values of a feature.
    """
    m = rows.size
    if m < 2:
        return None
    y_node = y[rows]
    parent = _node_impurity(y_node, mode, n_classes)
    if mode == CLASSIFICATION:
        onehot = np.zeros((m, n_classes), dtype=np.float64)
        onehot[np.arange(m), y_node.astype(np.int64)] = 1.0
    best = None
    for f in features:
        x = X[rows, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        cuts = np.nonzero(xs[1:] > xs[:-1])[0]
        if cuts.size == 0:
            continue
        n_left = (cuts + 1).astype(np.float64)
        n_right = m - n_left
        if mode == REGRESSION:
            ys = y_node[order]
            cy = np.cumsum(ys)
            cy2 = np.cumsum(ys * ys)
            sse_left = cy2[cuts] - cy[cuts] ** 2 / n_left
            sse_right = (cy2[-1] - cy2[cuts]) - (cy[-1] - cy[cuts]) ** 2 / n_right
            gains = parent - sse_left - sse_right
        else:
            cc = np.cumsum(onehot[order], axis=0)
            left_counts = cc[cuts]
            right_counts = cc[-1] - left_counts
            gini_left = n_left - np.sum(left_counts**2, axis=1) / n_left
            gini_right = n_right - np.sum(right_counts**2, axis=1) / n_right
            gains = parent - gini_left - gini_right
        pos = int(np.argmax(gains))  # first max: the lowest threshold wins ties
        gain = float(gains[pos])
        if gain > GAIN_EPS and (best is None or gain > best[0]):
            cut = cuts[pos]
            threshold = (xs[cut] + xs[cut + 1]) / 2.0
            if threshold >= xs[cut + 1]:  # midpoint of adjacent floats can round up
                threshold = xs[cut]
            best = (gain, int(f), float(threshold))
    return best


class _Leaf:
    __slots__ = ("rows", "value", "split", "left", "right")

    def __init__(self, X, y, rows, mode, n_classes, features):
        self.rows = rows
        self.value = _leaf_value(y[rows], mode, n_classes)
        self.split = _best_split(X, y, rows, features, mode, n_classes)
        self.left = None
        self.right = None


def _eligible_features(p, feature_rng, m_features):
    if feature_rng is None or m_features is None or m_features >= p:
        return np.arange(p)
    return np.sort(feature_rng.choice(p, size=m_features, replace=False))


def grow_best_first(
    X: np.ndarray,
    y: np.ndarray,
    max_leaves: int,
    mode: str,
    n_classes: int = 0,
    feature_rng=None,
    m_features: int | None = None,
) -> Tree:
    """Grow by repeatedly splitting the leaf whose best split gains most.

    Stops at ``max_leaves`` leaves or when no leaf has a positive-gain split.
    ``feature_rng``/``m_features`` restrict each leaf's split search to a
    freshly sampled feature subset (random-forest style).
    """
    p = X.shape[1]
    root = _Leaf(X, y, np.arange(y.size), mode, n_classes,
                 _eligible_features(p, feature_rng, m_features))
    leaves = [root]  # creation order; earliest wins gain ties
    n_leaves = 1
    while n_leaves < max_leaves:
        best = None
        for leaf in leaves:
            if leaf.split is not None and (best is None or leaf.split[0] > best.split[0]):
                best = leaf
        if best is None:
            break
        _, f, t = best.split
        mask = X[best.rows, f] <= t
        for side, rows in (("left", best.rows[mask]), ("right", best.rows[~mask])):
            child = _Leaf(X, y, rows, mode, n_classes,
                          _eligible_features(p, feature_rng, m_features))
            setattr(best, side, child)
            leaves.append(child)
        leaves.remove(best)
        best.rows = None
        n_leaves += 1
    return _flatten(root)


def grow_depth_limited(
    X: np.ndarray, y: np.ndarray, max_depth: int, mode: str, n_classes: int = 0
) -> Tree:
    """Grow depth-first, splitting every node with a positive-gain split
    until the depth cap (root depth 0)."""
    features = np.arange(X.shape[1])

    def build(rows, depth):
        leaf = _Leaf(X, y, rows, mode, n_classes, features)
        if depth >= max_depth or leaf.split is None:
            leaf.split = None
            return leaf
        _, f, t = leaf.split
        mask = X[rows, f] <= t
        leaf.left = build(rows[mask], depth + 1)
        leaf.right = build(rows[~mask], depth + 1)
        leaf.rows = None
        return leaf

    return _flatten(build(np.arange(y.size), 0))


def _flatten(root: _Leaf) -> Tree:
    feature, threshold, left, right, value = [], [], [], [], []

    def visit(node):
        idx = len(feature)
        if node.left is None:
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(node.value)
        else:
            feature.append(node.split[1])
            threshold.append(node.split[2])
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            left[idx] = visit(node.left)
            right[idx] = visit(node.right)
        return idx

    visit(root)
    return Tree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=np.float64),
    )
