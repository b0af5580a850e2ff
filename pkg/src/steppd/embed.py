"""Exact t-SNE: perplexity-calibrated affinities and KL gradient descent."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, NumericalError


@dataclass(frozen=True)
class EmbeddingConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum: float = 0.5
    final_momentum: float = 0.8
    min_gain: float = 0.01
    init_std: float = 1e-4
    entropy_tol: float = 1e-5
    seed: int = 0

    def validate(self, n: int | None = None) -> None:
        for name in ("perplexity", "learning_rate", "exaggeration", "init_std", "entropy_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"embedding {name} must be positive")
        if self.iterations < 1 or self.exaggeration_iters < 0:
            raise ConfigError("embedding iteration counts must be positive")
        if n is not None:
            if not self.perplexity < (n - 1) / 3.0 or n < 4 * self.perplexity:
                raise ConfigError(
                    f"perplexity {self.perplexity} is infeasible for {n} points "
                    f"(needs N >= 4*perplexity and perplexity < (N-1)/3)")


def squared_distances(X: np.ndarray) -> np.ndarray:
    sq = np.einsum("ij,ij->i", X, X)
    D = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.fill_diagonal(D, 0.0)
    return np.maximum(D, 0.0)


def _row_entropy(D: np.ndarray, beta: np.ndarray):
    P = np.exp(-D * beta[:, None])
    np.fill_diagonal(P, 0.0)
    Z = P.sum(axis=1)
    H = np.log(Z) + beta * (D * P).sum(axis=1) / Z
    return P / Z[:, None], H


def conditional_affinities(X, perplexity: float, tol: float = 1e-5, max_iter: int = 200):
    """Row-stochastic p_{j|i} whose entropies equal log(perplexity).

    The precision beta_i = 1/(2 sigma_i^2) of every row is bisected in
    parallel, doubling or halving while a bracket side is still open.
    Returns (P_conditional, beta, entropy).
    """
    X = np.asarray(X, dtype=np.float64)
    D = squared_distances(X)
    n = len(D)
    # shifting each row by its nearest-neighbour distance leaves p_{j|i} unchanged
    off = D + np.diag(np.full(n, np.inf))
    D = D - off.min(axis=1, keepdims=True)
    np.fill_diagonal(D, 0.0)
    target = np.log(perplexity)
    beta = np.ones(n)
    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    P, H = _row_entropy(D, beta)
    for _ in range(max_iter):
        diff = H - target
        active = np.abs(diff) >= tol
        if not active.any():
            break
        up = active & (diff > 0)  # entropy too high -> sharpen the kernel
        down = active & (diff < 0)
        lo[up] = beta[up]
        beta[up] = np.where(np.isinf(hi[up]), beta[up] * 2.0, (beta[up] + hi[up]) / 2.0)
        hi[down] = beta[down]
        beta[down] = (beta[down] + lo[down]) / 2.0
        P, H = _row_entropy(D, beta)
    if np.any(np.abs(H - target) >= tol):
        raise NumericalError("perplexity calibration did not converge")
    return P, beta, H


def joint_affinities(X, perplexity: float, tol: float = 1e-5) -> np.ndarray:
    """Symmetric P = (P_cond + P_cond^T) / 2N; non-negative, zero diagonal, sums to 1."""
    Pc, _, _ = conditional_affinities(X, perplexity, tol)
    return (Pc + Pc.T) / (2.0 * len(Pc))


def student_t_affinities(Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(Q, kernel) with kernel_ij = 1/(1+|y_i-y_j|^2) and zero diagonal."""
    num = 1.0 / (1.0 + squared_distances(Y))
    np.fill_diagonal(num, 0.0)
    return num / num.sum(), num


def kl_divergence(P, Q) -> float:
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    mask = ~np.eye(len(P), dtype=bool) & (P > 0)
    if np.any(Q[mask] <= 0):
        raise NumericalError("q vanishes where p is positive")
    return float(np.sum(P[mask] * np.log(P[mask] / Q[mask])))


def kl_gradient(P, Y) -> np.ndarray:
    """dKL/dy_i = 4 sum_j (p_ij - q_ij)(y_i - y_j) / (1 + |y_i - y_j|^2)."""
    Y = np.asarray(Y, dtype=np.float64)
    Q, num = student_t_affinities(Y)
    W = (np.asarray(P) - Q) * num
    return 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)


@dataclass
class Embedding:
    coords: np.ndarray
    kl_history: list[float]
    config: EmbeddingConfig
    entropies: np.ndarray = field(repr=False, default=None)

    @property
    def final_kl(self) -> float:
        return self.kl_history[-1]


def tsne_embed(X, config: EmbeddingConfig = EmbeddingConfig()) -> Embedding:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or not np.all(np.isfinite(X)):
        raise DataError("t-SNE input must be a finite 2-d matrix")
    n = len(X)
    config.validate(n)
    Pc, _, H = conditional_affinities(X, config.perplexity, config.entropy_tol)
    P = (Pc + Pc.T) / (2.0 * n)
    rng = np.random.default_rng(config.seed)
    Y = rng.normal(0.0, config.init_std, size=(n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    history = []
    for it in range(config.iterations):
        early = it < config.exaggeration_iters
        Q, num = student_t_affinities(Y)
        W = ((config.exaggeration * P if early else P) - Q) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
        same = np.sign(grad) == np.sign(update)
        gains = np.maximum(np.where(same, gains * 0.8, gains + 0.2), config.min_gain)
        mom = config.momentum if early else config.final_momentum
        update = mom * update - config.learning_rate * gains * grad
        Y = Y + update
        Y -= Y.mean(axis=0)
        history.append(kl_divergence(P, Q))
    if not np.all(np.isfinite(Y)):
        raise NumericalError("t-SNE diverged")
    return Embedding(Y, history, config, H)


def embedding_csv(sample_ids, coords, labels, config: EmbeddingConfig, extra: dict | None = None
                  ) -> str:
    """CSV text with a ``#``-prefixed JSON header echoing the configuration."""
    meta = {"method": "exact t-SNE", "init": "seeded gaussian", **asdict(config), **(extra or {})}
    buf = io.StringIO()
    buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "x", "y", "label"])
    for sid, (a, b), lab in zip(sample_ids, coords, labels):
        w.writerow([sid, repr(float(a)), repr(float(b)), lab])
    return buf.getvalue()


def write_embedding_csv(path: str | Path, sample_ids, coords, labels, config: EmbeddingConfig,
                        extra: dict | None = None) -> None:
    Path(path).write_text(embedding_csv(sample_ids, coords, labels, config, extra))
