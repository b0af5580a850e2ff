"""Accuracy, F1, ROC-AUC, PR-AUC and MCC.

Conventions: binary F1 is on class 1 (the positive, more severe class);
multiclass ROC-AUC and PR-AUC are macro one-vs-rest averages; any 0/0
denominator scores 0.
"""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

METRICS = ("accuracy", "f1", "roc_auc", "pr_auc", "mcc")


def _safe_div(num, den):
    return float(num) / float(den) if den != 0 else 0.0


def accuracy(y_true, y_pred) -> float:
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    return _safe_div(np.sum(y_true == y_pred), len(y_true))


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def normalize_rows(cm: np.ndarray) -> np.ndarray:
    cm = np.asarray(cm, dtype=np.float64)
    totals = cm.sum(axis=1, keepdims=True)
    return np.divide(cm, totals, out=np.zeros_like(cm), where=totals > 0)


def f1_score(y_true, y_pred, positive: int = 1) -> float:
    t = np.asarray(y_true) == positive
    p = np.asarray(y_pred) == positive
    tp = np.sum(t & p)
    return _safe_div(2 * tp, np.sum(t) + np.sum(p))


def macro_f1(y_true, y_pred, n_classes: int) -> float:
    return float(np.mean([f1_score(y_true, y_pred, c) for c in range(n_classes)]))


def roc_auc(y_true, score) -> float:
    """Mann-Whitney rank statistic; tied scores count one half."""
    y = np.asarray(y_true).astype(bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        return 0.0
    ranks = rankdata(np.asarray(score, dtype=np.float64))
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_precision(y_true, score) -> float:
    """Sum over distinct thresholds of (recall step) x precision."""
    y = np.asarray(y_true).astype(bool)
    n_pos = int(y.sum())
    if n_pos == 0:
        return 0.0
    score = np.asarray(score, dtype=np.float64)
    order = np.argsort(-score, kind="mergesort")
    s, t = score[order], y[order]
    tp = np.cumsum(t)
    # last position of each run of tied scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp_at = tp[ends]
    precision = tp_at / (ends + 1)
    recall = tp_at / n_pos
    steps = np.diff(np.r_[0.0, recall])
    return float(np.sum(steps * precision))


def mcc(y_true, y_pred, n_classes: int | None = None) -> float:
    """Matthews correlation; the K-class form reduces to the binary one at K=2."""
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if n_classes is None:
        n_classes = int(max(y_true.max(), y_pred.max())) + 1
    cm = confusion_matrix(y_true, y_pred, n_classes).astype(np.float64)
    t = cm.sum(axis=1)
    p = cm.sum(axis=0)
    c = np.trace(cm)
    s = cm.sum()
    num = c * s - np.dot(t, p)
    den = np.sqrt((s * s - np.dot(p, p)) * (s * s - np.dot(t, t)))
    return _safe_div(num, den)


def compute_metrics(y_true, y_pred, y_score, n_classes: int) -> dict[str, float]:
    """Five headline metrics for one prediction set.

    ``y_score`` is the (n, K) class-probability matrix.  For K > 2, "f1" is
    macro-F1 and the AUCs are macro one-vs-rest.
    """
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    y_score = np.asarray(y_score, dtype=np.float64)
    if not (len(y_true) == len(y_pred) == len(y_score)):
        raise ValueError("y_true, y_pred and y_score must have equal length")
    if y_score.ndim == 1:
        y_score = np.column_stack([1.0 - y_score, y_score])
    if n_classes == 2:
        f1 = f1_score(y_true, y_pred, 1)
        auc = roc_auc(y_true == 1, y_score[:, 1])
        ap = average_precision(y_true == 1, y_score[:, 1])
    else:
        f1 = macro_f1(y_true, y_pred, n_classes)
        auc = float(np.mean([roc_auc(y_true == k, y_score[:, k]) for k in range(n_classes)]))
        ap = float(np.mean([average_precision(y_true == k, y_score[:, k])
                            for k in range(n_classes)]))
    return {
        "accuracy": accuracy(y_true, y_pred),
        "f1": f1,
        "roc_auc": auc,
        "pr_auc": ap,
        "mcc": mcc(y_true, y_pred, n_classes),
    }


def summarize_folds(per_fold: list[dict[str, float]]) -> dict[str, dict]:
    """metric -> {mean, sd, folds}; sd is the population deviation over folds."""
    out = {}
    for name in METRICS:
        vals = np.array([m[name] for m in per_fold], dtype=np.float64)
        out[name] = {"mean": float(vals.mean()), "sd": float(vals.std()), "folds": vals.tolist()}
    return out
