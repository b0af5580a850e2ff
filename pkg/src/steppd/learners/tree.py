"""Array-backed decision trees and an exact greedy grower.

Split search bins every feature by its sorted unique training values, so a
per-node histogram of the sample statistics gives the exact left/right sums
for every candidate threshold.  Thresholds are midpoints between consecutive
values present in the node; samples with ``x <= threshold`` go left.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

LEAF = -1


@dataclass
class DecisionTree:
    feature: np.ndarray  # int, LEAF for leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_outputs)
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature == LEAF

    @property
    def max_depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.feature[node] != LEAF
        while active.any():
            r, nd = rows[active], node[active]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] != LEAF
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        """(n_rows, n_outputs) leaf values."""
        return self.value[self.apply(X)]

    def expected_value(self) -> np.ndarray:
        """Cover-weighted mean of the leaf values."""
        leaves = self.is_leaf
        return (self.cover[leaves, None] * self.value[leaves]).sum(axis=0) / self.cover[0]

    def used_features(self) -> set[int]:
        return set(self.feature[~self.is_leaf].tolist())

    def check_cover(self, tol: float = 1e-9) -> None:
        for i in np.flatnonzero(~self.is_leaf):
            total = self.cover[self.left[i]] + self.cover[self.right[i]]
            if abs(total - self.cover[i]) > tol * max(1.0, abs(self.cover[i])):
                raise ValueError(f"node {i}: cover {self.cover[i]} != children sum {total}")

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "cover": self.cover.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> DecisionTree:
        value = np.asarray(doc["value"], dtype=np.float64)
        if value.ndim == 1:
            value = value[:, None]
        return cls(
            feature=np.asarray(doc["feature"], dtype=np.int64),
            threshold=np.asarray(doc["threshold"], dtype=np.float64),
            left=np.asarray(doc["left"], dtype=np.int64),
            right=np.asarray(doc["right"], dtype=np.int64),
            value=value,
            cover=np.asarray(doc["cover"], dtype=np.float64),
        )

    @classmethod
    def leaf(cls, value, cover: float) -> DecisionTree:
        return cls(
            feature=np.array([LEAF]),
            threshold=np.array([0.0]),
            left=np.array([LEAF]),
            right=np.array([LEAF]),
            value=np.atleast_1d(np.asarray(value, dtype=np.float64))[None, :],
            cover=np.array([float(cover)]),
        )


class FeatureBins:
    """Per-feature sorted unique values and the bin code of every sample."""

    def __init__(self, X: np.ndarray):
        X = np.asarray(X, dtype=np.float64)
        self.n_rows, self.n_features = X.shape
        self.uniques = []
        codes = np.empty(X.shape, dtype=np.int64)
        for j in range(self.n_features):
            u, inv = np.unique(X[:, j], return_inverse=True)
            self.uniques.append(u)
            codes[:, j] = inv
        sizes = np.array([len(u) for u in self.uniques])
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.n_bins = int(self.offsets[-1])
        self.codes = codes
        self.flat_codes = codes + self.offsets[:-1]
        # feature owning each flat bin, and whether the bin ends its feature
        self.bin_feature = np.repeat(np.arange(self.n_features), sizes)
        self.last_in_feature = np.zeros(self.n_bins, dtype=bool)
        self.last_in_feature[self.offsets[1:] - 1] = True


# criterion(left_stats (B, s), node_stats (s,)) -> gain per candidate (B,), -inf if invalid
Criterion = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _node_histogram(bins: FeatureBins, idx: np.ndarray, stats: np.ndarray,
                    features: np.ndarray | None) -> np.ndarray:
    if features is None:
        flat = bins.flat_codes[idx].ravel()
        width = bins.n_features
    else:
        flat = bins.flat_codes[np.ix_(idx, features)].ravel()
        width = len(features)
    hist = np.empty((bins.n_bins, stats.shape[1]))
    for s in range(stats.shape[1]):
        hist[:, s] = np.bincount(flat, weights=np.repeat(stats[idx, s], width),
                                 minlength=bins.n_bins)
    return hist


def _segment_cumsum(bins: FeatureBins, hist: np.ndarray) -> np.ndarray:
    cs = np.cumsum(hist, axis=0)
    # running total just before each feature's first bin
    start = np.vstack([np.zeros((1, hist.shape[1])), cs[bins.offsets[1:-1] - 1]])
    return cs - start[bins.bin_feature]


def best_split(bins: FeatureBins, idx: np.ndarray, stats: np.ndarray, count_col: int,
               criterion: Criterion, features: np.ndarray | None = None):
    """Return (gain, feature, bin) of the best candidate, or None."""
    hist = _node_histogram(bins, idx, stats, features)
    node = stats[idx].sum(axis=0)
    left = _segment_cumsum(bins, hist)
    gain = criterion(left, node)
    n_left = left[:, count_col]
    valid = (~bins.last_in_feature) & (hist[:, count_col] > 0) & (n_left > 0) \
        & (n_left < node[count_col])
    if features is not None:
        chosen = np.zeros(bins.n_features, dtype=bool)
        chosen[features] = True
        valid &= chosen[bins.bin_feature]
    gain = np.where(valid, gain, -np.inf)
    b = int(np.argmax(gain))
    if not np.isfinite(gain[b]):
        return None
    return float(gain[b]), int(bins.bin_feature[b]), b - int(bins.offsets[bins.bin_feature[b]])


def _midpoint(bins: FeatureBins, idx: np.ndarray, f: int, b: int) -> float:
    codes = bins.codes[idx, f]
    lo = bins.uniques[f][b]
    hi = bins.uniques[f][codes[codes > b].min()]
    mid = 0.5 * (lo + hi)
    return float(lo if mid >= hi else mid)


def grow_tree(
    bins: FeatureBins,
    idx: np.ndarray,
    stats: np.ndarray,
    count_col: int,
    criterion: Criterion,
    leaf_value: Callable[[np.ndarray], np.ndarray],
    cover: Callable[[np.ndarray], float],
    max_depth: int,
    min_gain: float = 0.0,
    stop: Callable[[np.ndarray, int], bool] | None = None,
    feature_sampler: Callable[[], np.ndarray] | None = None,
) -> DecisionTree:
    """Depth-first exact greedy growth; nodes are stored in preorder.

    ``stats`` holds per-sample statistics (one column is a plain count);
    ``stop(node_stats, n)`` can force a leaf before search.
    """
    feature, threshold, left, right, value, covers = [], [], [], [], [], []

    def new_node(node_stats):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(np.atleast_1d(leaf_value(node_stats)))
        covers.append(cover(node_stats))
        return len(feature) - 1

    stack = [(idx, 0, None, None)]
    while stack:
        node_idx, depth, parent, side = stack.pop()
        node_stats = stats[node_idx].sum(axis=0)
        nid = new_node(node_stats)
        if parent is not None:
            (left if side == 0 else right)[parent] = nid
        if depth >= max_depth or (stop is not None and stop(node_stats, len(node_idx))):
            continue
        feats = feature_sampler() if feature_sampler is not None else None
        found = best_split(bins, node_idx, stats, count_col, criterion, feats)
        if found is None or found[0] <= min_gain:
            continue
        _, f, b = found
        feature[nid] = f
        threshold[nid] = _midpoint(bins, node_idx, f, b)
        go_left = bins.codes[node_idx, f] <= b
        # right pushed first so the left subtree is laid out first
        stack.append((node_idx[~go_left], depth + 1, nid, 1))
        stack.append((node_idx[go_left], depth + 1, nid, 0))

    return DecisionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.vstack(value).astype(np.float64),
        cover=np.array(covers, dtype=np.float64),
    )
