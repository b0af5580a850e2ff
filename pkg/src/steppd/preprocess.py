"""Train-only z-score standardization."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Standardizer:
    feature_names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray  # population (1/N) deviation; 0 for constant features
    fitted_on: str = "train"

    def transform(self, X: np.ndarray, feature_names=None) -> np.ndarray:
        if feature_names is not None and tuple(feature_names) != self.feature_names:
            raise DataError("feature order differs from the order the standardizer was fitted on")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise DataError(f"expected {len(self.feature_names)} columns, got shape {X.shape}")
        safe = np.where(self.std > 0, self.std, 1.0)
        out = (X - self.mean) / safe
        out[:, self.std == 0] = 0.0
        return out

    def inverse_transform(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z) * self.std + self.mean

    def to_dict(self) -> dict:
        return {
            "fitted_on": self.fitted_on,
            "features": {
                name: {"mean": float(m), "std": float(s)}
                for name, m, s in zip(self.feature_names, self.mean, self.std)
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> Standardizer:
        names = tuple(doc["features"])
        return cls(
            feature_names=names,
            mean=np.array([doc["features"][n]["mean"] for n in names]),
            std=np.array([doc["features"][n]["std"] for n in names]),
            fitted_on=doc.get("fitted_on", "train"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


def fit_standardizer(X: np.ndarray, feature_names, fitted_on: str = "train") -> Standardizer:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("cannot fit a standardizer on an empty matrix")
    if not np.isfinite(X).all():
        raise DataError("standardizer input contains missing or non-finite values")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    # exact zero for constant columns; X.std can leave ~1e-16 residue
    std[(X == X[0]).all(axis=0)] = 0.0
    return Standardizer(tuple(feature_names), mean, std, fitted_on)


def apply_standardizer(s: Standardizer, X: np.ndarray, feature_names=None) -> np.ndarray:
    return s.transform(X, feature_names)
