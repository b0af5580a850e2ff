"""The four benchmarked classifiers behind one fit/predict_proba contract."""
from __future__ import annotations

import json

import numpy as np

from .balance import ClassBalanceInfo, compute_balanced_weights, compute_scale_pos_weight
from .forest import ForestConfig, RandomForest, train_random_forest
from .gbt import GBTConfig, TreeEnsemble, train_gbt
from .knn import KnnModel, knn_predict, train_knn
from .logistic import LinearModel, LogisticConfig, train_logistic
from .tree import DecisionTree

MODEL_NAMES = ("logistic", "knn", "random_forest", "gbt")


def fit_model(name: str, X, y, params: dict, n_classes: int, seed: int = 0):
    """Train model ``name`` with hyperparameters ``params`` (grid-point dict)."""
    params = dict(params)
    y = np.asarray(y, dtype=np.int64)
    if name == "gbt":
        cfg = GBTConfig(**{**params, "seed": params.get("seed", seed)})
        return train_gbt(X, y, config=cfg, n_classes=n_classes)
    if name == "random_forest":
        cfg = ForestConfig(**{**params, "seed": params.get("seed", seed)})
        return train_random_forest(X, y, config=cfg, n_classes=n_classes)
    if name == "logistic":
        return train_logistic(X, y, config=LogisticConfig(**params), n_classes=n_classes)
    if name == "knn":
        return train_knn(X, y, n_classes=n_classes, **params)
    raise ValueError(f"unknown model {name!r}; choose from {MODEL_NAMES}")


def model_from_dict(doc: dict):
    kind = doc["kind"]
    if kind == "gbt":
        return TreeEnsemble.from_dict(doc)
    if kind == "random_forest":
        return RandomForest.from_dict(doc)
    if kind == "logistic":
        return LinearModel.from_dict(doc)
    raise ValueError(f"cannot rebuild a {kind!r} model from its serialization alone")


def dumps_model(model) -> str:
    return json.dumps(model.to_dict(), separators=(",", ":"))


__all__ = [
    "ClassBalanceInfo",
    "DecisionTree",
    "ForestConfig",
    "GBTConfig",
    "KnnModel",
    "LinearModel",
    "LogisticConfig",
    "MODEL_NAMES",
    "RandomForest",
    "TreeEnsemble",
    "compute_balanced_weights",
    "compute_scale_pos_weight",
    "dumps_model",
    "fit_model",
    "knn_predict",
    "model_from_dict",
    "train_gbt",
    "train_knn",
    "train_logistic",
    "train_random_forest",
]
