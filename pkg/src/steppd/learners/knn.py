"""Unweighted k-nearest-neighbour vote on standardized features."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DataError


@dataclass
class KnnModel:
    X: np.ndarray
    y: np.ndarray
    k: int
    n_classes: int
    training_ref: str = ""

    kind = "knn"

    def __post_init__(self):
        if not 1 <= self.k <= len(self.X):
            raise ConfigError(f"k={self.k} must lie in [1, {len(self.X)}]")

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def neighbors(self, Q: np.ndarray, chunk: int = 512) -> np.ndarray:
        """Indices of the k nearest training rows; distance ties go to the lower index."""
        Q = np.asarray(Q, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[1] != self.n_features:
            raise DataError(f"expected {self.n_features} features, got shape {Q.shape}")
        sq_train = np.einsum("ij,ij->i", self.X, self.X)
        out = np.empty((len(Q), self.k), dtype=np.int64)
        for start in range(0, len(Q), chunk):
            q = Q[start:start + chunk]
            d2 = np.einsum("ij,ij->i", q, q)[:, None] + sq_train[None, :] - 2.0 * q @ self.X.T
            np.maximum(d2, 0.0, out=d2)
            out[start:start + chunk] = np.argsort(d2, axis=1, kind="stable")[:, : self.k]
        return out

    def predict_proba(self, Q) -> np.ndarray:
        """Neighbour vote fractions per class."""
        nb = self.y[self.neighbors(Q)]
        votes = np.zeros((len(nb), self.n_classes))
        for c in range(self.n_classes):
            votes[:, c] = np.sum(nb == c, axis=1)
        return votes / self.k

    def predict(self, Q) -> np.ndarray:
        # argmax returns the first maximum: vote ties go to the smaller class index
        return np.argmax(self.predict_proba(Q), axis=1)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "k": self.k,
            "n_classes": self.n_classes,
            "n_train": len(self.X),
            "training_ref": self.training_ref or training_digest(self.X, self.y),
        }


def training_digest(X: np.ndarray, y: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(y, dtype=np.int64).tobytes())
    return "sha256:" + h.hexdigest()


def train_knn(X, y, k: int = 5, n_classes: int | None = None, training_ref: str = "") -> KnnModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) != len(y):
        raise DataError("X and y must be aligned")
    K = int(n_classes if n_classes is not None else y.max() + 1)
    return KnnModel(X=X.copy(), y=y.copy(), k=int(k), n_classes=K, training_ref=training_ref)


def knn_predict(model: KnnModel, x) -> np.ndarray:
    """Class scores (vote fractions) for one sample or a batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return model.predict_proba(x[None, :])[0]
    return model.predict_proba(x)
