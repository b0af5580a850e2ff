"""Stratified holdout and k-fold assignment, optionally grouped by subject."""
from __future__ import annotations

import numpy as np

from ..errors import DataError


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def stratified_holdout(y, seed: int, test_fraction: float = 0.2,
                       min_per_class: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Per class, hold out round(test_fraction * n_c) rows chosen at random.

    Returns sorted (train_idx, test_idx).
    """
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    test = []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if len(idx) < min_per_class:
            raise DataError(f"class {c} has {len(idx)} rows; at least {min_per_class} required")
        n_test = _round_half_up(test_fraction * len(idx))
        test.append(rng.permutation(idx)[:n_test])
    test_idx = np.sort(np.concatenate(test))
    train_idx = np.setdiff1d(np.arange(len(y)), test_idx)
    return train_idx, test_idx


def stratified_fold_ids(y, k: int, seed: int) -> np.ndarray:
    """Fold id per row; every class is dealt as evenly as possible.

    Class c contributes floor(n_c/k) or ceil(n_c/k) rows to each fold.  The
    folds receiving the extra rows rotate from class to class so that total
    fold sizes stay balanced too.
    """
    y = np.asarray(y)
    if k < 2:
        raise DataError("need at least 2 folds")
    rng = np.random.default_rng(seed)
    fold = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if len(idx) < k:
            raise DataError(f"class {c} has {len(idx)} rows, fewer than {k} folds")
        perm = rng.permutation(idx)
        base, rem = divmod(len(idx), k)
        sizes = np.full(k, base)
        sizes[(offset + np.arange(rem)) % k] += 1
        offset = (offset + rem) % k
        fold[perm] = np.repeat(np.arange(k), sizes)
    return fold


def folds_from_ids(fold_ids: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    k = int(fold_ids.max()) + 1
    return [(np.flatnonzero(fold_ids != f), np.flatnonzero(fold_ids == f)) for f in range(k)]


def stratified_kfold(y, k: int = 5, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """List of (fit_idx, val_idx); the validation sets partition the rows."""
    return folds_from_ids(stratified_fold_ids(y, k, seed))


def grouped_fold_ids(y, groups, k: int, seed: int) -> np.ndarray:
    """Assign whole groups (subjects) to folds, greedily tracking class targets.

    Groups are visited largest first (random order among equal sizes) and each
    goes to the fold whose per-class counts fall furthest below n_c/k.  Rows of
    one group never straddle folds, so the per-class bound is only approximate.
    """
    y = np.asarray(y)
    groups = np.asarray(groups)
    classes = np.unique(y)
    rng = np.random.default_rng(seed)
    uniq, inv = np.unique(groups, return_inverse=True)
    if len(uniq) < k:
        raise DataError(f"{len(uniq)} groups cannot fill {k} folds")
    counts = np.zeros((len(uniq), len(classes)))
    np.add.at(counts, (inv, np.searchsorted(classes, y)), 1)
    target = counts.sum(axis=0) / k
    order = np.lexsort((rng.permutation(len(uniq)), -counts.sum(axis=1)))
    filled = np.zeros((k, len(classes)))
    group_fold = np.empty(len(uniq), dtype=np.int64)
    for g in order:
        deficit = ((filled + counts[g] - target) ** 2).sum(axis=1) - ((filled - target) ** 2).sum(axis=1)
        f = int(np.argmin(deficit))
        group_fold[g] = f
        filled[f] += counts[g]
    return group_fold[inv]


def grouped_holdout(y, groups, seed: int, test_fraction: float = 0.2):
    """Subject-grouped holdout: one of round(1/test_fraction) grouped folds."""
    k = max(2, _round_half_up(1.0 / test_fraction))
    ids = grouped_fold_ids(y, groups, k, seed)
    test_idx = np.flatnonzero(ids == 0)
    return np.flatnonzero(ids != 0), test_idx


def grouped_kfold(y, groups, k: int = 5, seed: int = 0):
    return folds_from_ids(grouped_fold_ids(y, groups, k, seed))
