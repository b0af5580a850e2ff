"""Grid search under stratified k-fold CV, plus the holdout retrain."""
from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, StepPDError
from ..learners import fit_model
from ..preprocess import Standardizer, fit_standardizer
from .metrics import compute_metrics, confusion_matrix, normalize_rows, summarize_folds
from .splits import grouped_holdout, grouped_kfold, stratified_holdout, stratified_kfold

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    model: str
    params: dict  # name -> list of values, searched as a cartesian product
    metric: str = "f1"

    def __post_init__(self):
        if not self.params or any(len(v) == 0 for v in self.params.values()):
            raise ValueError(f"grid for {self.model} is empty")

    def points(self) -> list[dict]:
        keys = list(self.params)
        return [dict(zip(keys, combo)) for combo in itertools.product(*self.params.values())]


@dataclass
class FittedPipeline:
    """Standardizer fitted on the training rows followed by a model."""

    standardizer: Standardizer
    model: object

    def transform(self, X):
        return self.standardizer.transform(X)

    def predict_proba(self, X):
        return self.model.predict_proba(self.standardizer.transform(X))

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)


def fit_pipeline(model: str, X, y, params: dict, n_classes: int, seed: int,
                 feature_names=None) -> FittedPipeline:
    names = feature_names if feature_names is not None else [f"x{j}" for j in range(X.shape[1])]
    std = fit_standardizer(X, names)
    return FittedPipeline(std, fit_model(model, std.transform(X), y, params, n_classes, seed))


def selection_score(metric: str, y_true, proba, n_classes: int) -> float:
    pred = np.argmax(proba, axis=1)
    report = compute_metrics(y_true, pred, proba, n_classes)
    # macro_f1 and f1 share the "f1" slot of the report
    return report["f1"] if metric in ("f1", "macro_f1") else report[metric]


@dataclass
class ConfigScore:
    index: int
    params: dict
    fold_scores: list[float]
    mean: float
    failed: str | None = None
    oof_proba: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"index": self.index, "params": self.params, "fold_scores": self.fold_scores,
                "mean": self.mean, "failed": self.failed}


@dataclass
class GridResult:
    best_index: int
    best_params: dict
    scores: list[ConfigScore]

    @property
    def best(self) -> ConfigScore:
        return self.scores[self.best_index]


def _score_config(args) -> ConfigScore:
    index, model, params, X, y, folds, n_classes, seed, metric = args
    oof = np.full((len(y), n_classes), np.nan)
    scores = []
    try:
        for fit_idx, val_idx in folds:
            pipe = fit_pipeline(model, X[fit_idx], y[fit_idx], params, n_classes, seed)
            proba = pipe.predict_proba(X[val_idx])
            oof[val_idx] = proba
            scores.append(selection_score(metric, y[val_idx], proba, n_classes))
    except (StepPDError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.warning("%s %s failed: %s", model, params, exc)
        return ConfigScore(index, params, scores, float("nan"), failed=str(exc))
    return ConfigScore(index, params, scores, float(np.mean(scores)), oof_proba=oof)


def grid_search(X, y, folds, grid: GridSpec, n_classes: int, seed: int = 0,
                workers: int = 1) -> GridResult:
    """Score every grid point over the folds; the highest mean wins, ties to grid order.

    The standardizer is refitted on each fold's fitting rows.  Configurations
    whose training fails are reported with ``failed`` set and never selected.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    jobs = [(i, grid.model, p, X, y, folds, n_classes, seed, grid.metric)
            for i, p in enumerate(grid.points())]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(_score_config, jobs))
    else:
        scores = [_score_config(j) for j in jobs]
    ok = [s for s in scores if s.failed is None]
    if not ok:
        raise DataError(f"every {grid.model} configuration failed to train")
    best = max(ok, key=lambda s: (s.mean, -s.index))
    return GridResult(best.index, best.params, scores)


def oof_confusion(pipelines, folds, X, y, n_classes: int) -> np.ndarray:
    """Row-normalised confusion of out-of-fold predictions."""
    pred = np.full(len(y), -1, dtype=np.int64)
    for pipe, (_, val_idx) in zip(pipelines, folds):
        if np.any(pred[val_idx] >= 0):
            raise DataError("a row is predicted by more than one fold")
        pred[val_idx] = pipe.predict(np.asarray(X)[val_idx])
    return confusion_from_predictions(y, pred, n_classes)


def confusion_from_predictions(y, pred, n_classes: int) -> np.ndarray:
    pred = np.asarray(pred)
    if np.any(pred < 0):
        raise DataError(f"{int(np.sum(pred < 0))} rows were never predicted out of fold")
    return normalize_rows(confusion_matrix(y, pred, n_classes))


@dataclass
class ModelEvaluation:
    model: str
    best_params: dict
    grid: list[dict]
    cv: dict
    holdout: dict
    oof_confusion: np.ndarray
    holdout_confusion: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    fold_ids: np.ndarray
    final: FittedPipeline
    test_proba: np.ndarray

    def metrics_dict(self) -> dict:
        return {
            "best_params": self.best_params,
            "cv": self.cv,
            "holdout": self.holdout,
            "grid": self.grid,
        }


def make_splits(y, seed: int, k: int = 5, test_fraction: float = 0.2, groups=None):
    """Holdout plus k folds over the training part; folds index into train_idx."""
    if groups is None:
        train_idx, test_idx = stratified_holdout(y, seed, test_fraction)
        folds = stratified_kfold(y[train_idx], k, seed + 1)
    else:
        groups = np.asarray(groups)
        train_idx, test_idx = grouped_holdout(y, groups, seed, test_fraction)
        folds = grouped_kfold(y[train_idx], groups[train_idx], k, seed + 1)
    return train_idx, test_idx, folds


def evaluate_model(X, y, n_classes: int, grid: GridSpec, seed: int = 0, k: int = 5,
                   groups=None, feature_names=None, workers: int = 1,
                   splits=None) -> ModelEvaluation:
    """Holdout split -> CV grid search -> per-fold metrics of the winner -> retrain."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    train_idx, test_idx, folds = splits if splits is not None else make_splits(
        y, seed, k, groups=groups)
    Xtr, ytr = X[train_idx], y[train_idx]
    result = grid_search(Xtr, ytr, folds, grid, n_classes, seed, workers)
    best = result.best
    per_fold = []
    fold_ids = np.empty(len(train_idx), dtype=np.int64)
    for f, (_, val_idx) in enumerate(folds):
        proba = best.oof_proba[val_idx]
        per_fold.append(compute_metrics(ytr[val_idx], np.argmax(proba, axis=1), proba, n_classes))
        fold_ids[val_idx] = f
    oof_pred = np.argmax(np.nan_to_num(best.oof_proba, nan=-1.0), axis=1)
    final = fit_pipeline(grid.model, Xtr, ytr, best.params, n_classes, seed, feature_names)
    test_proba = final.predict_proba(X[test_idx])
    test_pred = np.argmax(test_proba, axis=1)
    return ModelEvaluation(
        model=grid.model,
        best_params=best.params,
        grid=[s.to_dict() for s in result.scores],
        cv=summarize_folds(per_fold),
        holdout=compute_metrics(y[test_idx], test_pred, test_proba, n_classes),
        oof_confusion=confusion_from_predictions(ytr, oof_pred, n_classes),
        holdout_confusion=normalize_rows(confusion_matrix(y[test_idx], test_pred, n_classes)),
        train_idx=train_idx,
        test_idx=test_idx,
        fold_ids=fold_ids,
        final=final,
        test_proba=test_proba,
    )
