"""Class-weighted random forest of Gini CART trees."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, DataError
from .balance import ClassBalanceInfo, compute_balanced_weights
from .tree import DecisionTree, FeatureBins, grow_tree


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 200
    max_depth: int = 8
    min_leaf: int = 1
    features_per_split: int | str = "sqrt"  # int, "sqrt" or "all"
    bootstrap: bool = True
    class_weight: str | None = "balanced"
    seed: int = 0

    def validate(self):
        if self.n_trees < 1 or self.max_depth < 1:
            raise ConfigError("n_trees and max_depth must be >= 1")
        if self.min_leaf < 1:
            raise ConfigError("min_leaf must be >= 1")
        if self.class_weight not in ("balanced", None):
            raise ConfigError(f"unknown class_weight {self.class_weight!r}")

    def n_split_features(self, d: int) -> int:
        m = self.features_per_split
        if m == "sqrt":
            return max(1, int(np.sqrt(d)))
        if m == "all":
            return d
        if isinstance(m, int) and 1 <= m:
            return min(m, d)
        raise ConfigError(f"bad features_per_split {m!r}")


@dataclass
class RandomForest:
    trees: list[DecisionTree]
    n_classes: int
    n_features: int
    config: dict = field(default_factory=dict)

    kind = "random_forest"

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(f"expected {self.n_features} features, got shape {X.shape}")
        total = np.zeros((len(X), self.n_classes))
        for tree in self.trees:
            total += tree.predict(X)
        return total / len(self.trees)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "config": self.config,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> RandomForest:
        return cls(
            trees=[DecisionTree.from_dict(t) for t in doc["trees"]],
            n_classes=int(doc["n_classes"]),
            n_features=int(doc["n_features"]),
            config=doc.get("config", {}),
        )


def _gini_criterion(n_classes: int, min_leaf: int):
    def criterion(left, node):
        L = left[:, :n_classes]
        T = node[:n_classes]
        R = T - L
        WL, WR, W = L.sum(axis=1), R.sum(axis=1), T.sum()
        with np.errstate(divide="ignore", invalid="ignore"):
            # weighted impurity decrease, up to the constant factor 1/W
            gain = (L**2).sum(axis=1) / WL + (R**2).sum(axis=1) / WR - (T**2).sum() / W
        nL = left[:, n_classes]
        ok = (nL >= min_leaf) & (node[n_classes] - nL >= min_leaf) & (WL > 0) & (WR > 0)
        return np.where(ok, gain, -np.inf)
    return criterion


def train_random_forest(X, y, weights: ClassBalanceInfo | None = None,
                        config: ForestConfig = ForestConfig(),
                        n_classes: int | None = None) -> RandomForest:
    """Bootstrap-sampled, class-weighted Gini trees; leaves hold class distributions."""
    config.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) != len(y) or len(X) == 0:
        raise DataError("X and y must be non-empty and aligned")
    K = int(n_classes if n_classes is not None else y.max() + 1)
    n, d = X.shape
    if config.class_weight == "balanced":
        if weights is None:
            weights = compute_balanced_weights(y, classes=list(range(K)))
        cw = weights.sample_weights(y, "balanced")
    else:
        cw = np.ones(n)
    onehot = np.eye(K)[y]
    bins = FeatureBins(X)
    rng = np.random.default_rng(config.seed)
    m = config.n_split_features(d)
    criterion = _gini_criterion(K, config.min_leaf)
    # tolerance keeps float noise from splitting nodes with no real decrease
    min_gain = 1e-12

    def sampler():
        return np.sort(rng.choice(d, m, replace=False))

    def stop(node, count):
        return np.count_nonzero(node[:K] > 0) <= 1 or count < 2 * config.min_leaf

    trees = []
    for _ in range(config.n_trees):
        if config.bootstrap:
            mult = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64)
        else:
            mult = np.ones(n)
        rows = np.flatnonzero(mult > 0)
        w = mult * cw
        stats = np.column_stack([onehot * w[:, None], mult])
        tree = grow_tree(
            bins, rows, stats, count_col=K, criterion=criterion,
            leaf_value=lambda s: s[:K] / s[:K].sum(),
            cover=lambda s: float(s[:K].sum()),
            max_depth=config.max_depth,
            min_gain=min_gain,
            stop=stop,
            feature_sampler=sampler if m < d else None,
        )
        trees.append(tree)
    return RandomForest(trees=trees, n_classes=K, n_features=d, config=asdict(config))
