"""L2-penalised, class-weighted logistic regression (binary and multinomial)."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_softmax, softmax

from ..errors import ConfigError, ConvergenceError, DataError
from .balance import ClassBalanceInfo, compute_balanced_weights


@dataclass(frozen=True)
class LogisticConfig:
    l2: float = 0.1
    max_iter: int = 1000
    tol: float = 1e-6
    class_weight: str | None = "balanced"

    def validate(self):
        if self.l2 < 0 or self.max_iter < 0 or self.tol <= 0:
            raise ConfigError("l2 >= 0, max_iter >= 0 and tol > 0 required")
        if self.class_weight not in ("balanced", None):
            raise ConfigError(f"unknown class_weight {self.class_weight!r}")


@dataclass
class LinearModel:
    """Binary models keep one weight column (class-1 log-odds)."""

    weights: np.ndarray  # (d, 1) binary or (d, K)
    bias: np.ndarray
    n_classes: int
    l2: float
    n_iter: int = 0
    grad_norm: float = 0.0
    config: dict = field(default_factory=dict)

    kind = "logistic"

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(f"expected {self.n_features} features, got shape {X.shape}")
        return X @ self.weights + self.bias

    def predict_proba(self, X) -> np.ndarray:
        z = self.decision_function(X)
        if self.n_classes == 2:
            p = expit(z[:, 0])
            return np.column_stack([1.0 - p, p])
        return softmax(z, axis=1)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_classes": self.n_classes,
            "l2": self.l2,
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> LinearModel:
        return cls(
            weights=np.asarray(doc["weights"], dtype=np.float64),
            bias=np.asarray(doc["bias"], dtype=np.float64),
            n_classes=int(doc["n_classes"]),
            l2=float(doc["l2"]),
            config=doc.get("config", {}),
        )


def logistic_objective(theta, X, y, w, l2, n_classes):
    """Weighted mean NLL + (l2/2)||W||^2 and its gradient; the bias is unpenalised.

    ``theta`` packs the (d, C) weight matrix row-major followed by C biases,
    with C = 1 for binary problems.
    """
    n, d = X.shape
    C = 1 if n_classes == 2 else n_classes
    W = theta[: d * C].reshape(d, C)
    b = theta[d * C:]
    Z = X @ W + b
    wsum = w.sum()
    if C == 1:
        z = Z[:, 0]
        nll = np.logaddexp(0.0, z) - y * z
        R = (expit(z) - y)[:, None]
    else:
        logp = log_softmax(Z, axis=1)
        nll = -logp[np.arange(n), y]
        R = np.exp(logp)
        R[np.arange(n), y] -= 1.0
    loss = np.dot(w, nll) / wsum + 0.5 * l2 * np.sum(W * W)
    R *= (w / wsum)[:, None]
    gW = X.T @ R + l2 * W
    gb = R.sum(axis=0)
    return loss, np.concatenate([gW.ravel(), gb])


def initial_bias(y, w, n_classes) -> np.ndarray:
    """Weighted base-rate logits: log-odds (binary) or log class priors."""
    if n_classes == 2:
        pos = np.dot(w, y)
        return np.array([np.log(pos / (w.sum() - pos))])
    prior = np.array([w[y == k].sum() for k in range(n_classes)]) / w.sum()
    return np.log(prior)


def train_logistic(X, y, weights: ClassBalanceInfo | None = None, l2: float | None = None,
                   config: LogisticConfig = LogisticConfig(),
                   n_classes: int | None = None) -> LinearModel:
    """L-BFGS on the weighted objective; converged when the gradient inf-norm < tol."""
    config.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) != len(y) or len(X) == 0:
        raise DataError("X and y must be non-empty and aligned")
    if not np.isfinite(X).all():
        raise DataError("X contains non-finite values")
    l2 = config.l2 if l2 is None else float(l2)
    K = int(n_classes if n_classes is not None else y.max() + 1)
    if config.class_weight == "balanced":
        if weights is None:
            weights = compute_balanced_weights(y, classes=list(range(K)))
        w = weights.sample_weights(y, "balanced")
    else:
        w = np.ones(len(y))
    d = X.shape[1]
    C = 1 if K == 2 else K
    theta0 = np.concatenate([np.zeros(d * C), initial_bias(y, w, K)])

    def unpack(theta, n_iter, gnorm):
        return LinearModel(
            weights=theta[: d * C].reshape(d, C).copy(),
            bias=theta[d * C:].copy(),
            n_classes=K, l2=l2, n_iter=n_iter, grad_norm=gnorm,
            config=dict(asdict(config), l2=l2),
        )

    if config.max_iter == 0:
        _, g = logistic_objective(theta0, X, y, w, l2, K)
        return unpack(theta0, 0, float(np.max(np.abs(g))))

    res = minimize(
        logistic_objective, theta0, args=(X, y, w, l2, K), jac=True, method="L-BFGS-B",
        options={"maxiter": config.max_iter, "gtol": config.tol, "ftol": 0.0, "maxcor": 20},
    )
    _, g = logistic_objective(res.x, X, y, w, l2, K)
    gnorm = float(np.max(np.abs(g)))
    if gnorm >= config.tol:
        raise ConvergenceError(
            f"logistic regression did not converge in {res.nit} iterations", gnorm
        )
    return unpack(res.x, int(res.nit), gnorm)
