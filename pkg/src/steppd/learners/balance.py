"""Class-imbalance weights: majority/minority ratio and inverse-frequency weights."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ClassBalanceInfo:
    classes: tuple[int, ...]
    counts: tuple[int, ...]
    n_major: int
    n_minor: int
    minority: int
    scale_pos_weight: float
    per_class_weight: dict[int, float]

    def sample_weights(self, y, scheme: str = "balanced") -> np.ndarray:
        """Per-row weights.

        ``scheme="minority"`` gives every minority-class row ``scale_pos_weight``
        and everything else 1; ``"balanced"`` uses the inverse-frequency weights
        rescaled so the lightest class has weight 1.  Both are therefore
        invariant to a common rescaling of the class weights; ``"none"`` is all
        ones.
        """
        y = np.asarray(y)
        if scheme == "none":
            return np.ones(len(y))
        if scheme == "minority":
            return np.where(y == self.minority, self.scale_pos_weight, 1.0)
        if scheme == "balanced":
            lightest = min(self.per_class_weight.values())
            lut = {c: w / lightest for c, w in self.per_class_weight.items()}
            return np.array([lut[int(c)] for c in y], dtype=np.float64)
        raise ValueError(f"unknown weighting scheme {scheme!r}")


def _counts(labels, classes=None):
    labels = np.asarray(labels)
    present, counts = np.unique(labels, return_counts=True)
    if classes is None:
        return [int(c) for c in present], [int(n) for n in counts]
    lookup = dict(zip(present.tolist(), counts.tolist()))
    extra = set(lookup) - set(classes)
    if extra:
        raise ValueError(f"labels contain classes {sorted(extra)} outside {list(classes)}")
    missing = [c for c in classes if c not in lookup]
    if missing:
        raise ValueError(f"classes {missing} have no samples")
    return list(classes), [lookup[c] for c in classes]


def compute_scale_pos_weight(labels) -> float:
    """n_major / n_minor for a two-class label vector."""
    classes, counts = _counts(labels)
    if len(classes) != 2:
        raise ValueError(f"need exactly two classes, found {len(classes)}")
    return max(counts) / min(counts)


def compute_balanced_weights(labels, classes=None) -> ClassBalanceInfo:
    """Inverse-frequency weights N / (K * n_c) plus the majority/minority ratio."""
    classes, counts = _counts(labels, classes)
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    n, k = sum(counts), len(classes)
    weights = {c: n / (k * m) for c, m in zip(classes, counts)}
    n_major, n_minor = max(counts), min(counts)
    # ties resolve to the highest class index, i.e. the more severe class
    minority = max(c for c, m in zip(classes, counts) if m == n_minor)
    return ClassBalanceInfo(
        classes=tuple(classes),
        counts=tuple(counts),
        n_major=n_major,
        n_minor=n_minor,
        minority=minority,
        scale_pos_weight=n_major / n_minor,
        per_class_weight=weights,
    )
