"""Second-order gradient-boosted trees for logistic and softmax objectives."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit, log_softmax, softmax

from ..errors import ConfigError, DataError
from .balance import ClassBalanceInfo, compute_balanced_weights
from .tree import DecisionTree, FeatureBins, grow_tree


@dataclass(frozen=True)
class GBTConfig:
    n_rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    min_child_weight: float = 1.0
    reg_lambda: float = 1.0
    gamma: float = 0.0
    subsample: float = 1.0
    colsample: float = 1.0
    seed: int = 0
    # "auto": minority rows x scale_pos_weight (binary), inverse frequency (multiclass)
    weighting: str = "auto"

    def validate(self):
        if self.n_rounds < 0 or self.max_depth < 1:
            raise ConfigError("n_rounds must be >= 0 and max_depth >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ConfigError("learning_rate must lie in (0, 1]")
        if self.reg_lambda < 0 or self.gamma < 0 or self.min_child_weight < 0:
            raise ConfigError("reg_lambda, gamma and min_child_weight must be >= 0")
        if not (0 < self.subsample <= 1 and 0 < self.colsample <= 1):
            raise ConfigError("subsample and colsample must lie in (0, 1]")
        if self.weighting not in ("auto", "minority", "balanced", "none"):
            raise ConfigError(f"unknown weighting {self.weighting!r}")


@dataclass
class TreeEnsemble:
    """margin(x) = base_score + learning_rate * sum of tree outputs.

    Binary models have one margin (log-odds of class 1); softmax models keep
    one margin per class and ``tree_class[t]`` names the class tree t feeds.
    """

    trees: list[DecisionTree]
    tree_class: list[int]
    base_score: np.ndarray
    objective: str  # "binary_logistic" | "softmax"
    n_classes: int
    learning_rate: float
    n_features: int
    train_loss: list[float] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    kind = "gbt"

    @property
    def n_outputs(self) -> int:
        return 1 if self.objective == "binary_logistic" else self.n_classes

    def _check(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(f"expected {self.n_features} features, got shape {X.shape}")
        return X

    def margin(self, X) -> np.ndarray:
        """(n,) for binary models, (n, K) for softmax."""
        X = self._check(X)
        out = np.tile(self.base_score, (len(X), 1))
        for tree, k in zip(self.trees, self.tree_class):
            out[:, k] += self.learning_rate * tree.predict(X)[:, 0]
        return out[:, 0] if self.objective == "binary_logistic" else out

    def predict_proba(self, X) -> np.ndarray:
        m = self.margin(X)
        if self.objective == "binary_logistic":
            p = expit(m)
            return np.column_stack([1.0 - p, p])
        return softmax(m, axis=1)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "objective": self.objective,
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "learning_rate": self.learning_rate,
            "base_score": self.base_score.tolist(),
            "config": self.config,
            "trees": [dict(t.to_dict(), output=k) for t, k in zip(self.trees, self.tree_class)],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> TreeEnsemble:
        return cls(
            trees=[DecisionTree.from_dict(t) for t in doc["trees"]],
            tree_class=[int(t["output"]) for t in doc["trees"]],
            base_score=np.asarray(doc["base_score"], dtype=np.float64),
            objective=doc["objective"],
            n_classes=int(doc["n_classes"]),
            learning_rate=float(doc["learning_rate"]),
            n_features=int(doc["n_features"]),
            config=doc.get("config", {}),
        )


def gbt_sample_weights(y, balance: ClassBalanceInfo, n_classes: int, weighting: str = "auto"):
    if weighting == "auto":
        weighting = "minority" if n_classes == 2 else "balanced"
    return balance.sample_weights(y, weighting)


def weighted_logloss(margin: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    """Weighted mean negative log-likelihood of binary or softmax margins."""
    if margin.ndim == 1:
        nll = np.logaddexp(0.0, margin) - y * margin
    else:
        nll = -log_softmax(margin, axis=1)[np.arange(len(y)), y]
    return float(np.sum(w * nll) / np.sum(w))


def _split_criterion(reg_lambda, gamma, min_child_weight):
    def criterion(left, node):
        GL, HL = left[:, 0], left[:, 1]
        G, H = node[0], node[1]
        GR, HR = G - GL, H - HL
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = 0.5 * (GL**2 / (HL + reg_lambda) + GR**2 / (HR + reg_lambda)
                          - G**2 / (H + reg_lambda)) - gamma
        ok = (HL >= min_child_weight) & (HR >= min_child_weight) & (HL > 0) & (HR > 0)
        return np.where(ok, gain, -np.inf)
    return criterion


def train_gbt(X, y, balance: ClassBalanceInfo | None = None,
              config: GBTConfig = GBTConfig(), sample_weight=None,
              n_classes: int | None = None) -> TreeEnsemble:
    """Fit a boosted ensemble on integer labels 0..K-1.

    Per round, one regression tree per output is fitted to the weighted
    gradient/hessian of the log loss: leaf value -G/(H+lambda), split gain
    1/2 [G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l)] - gamma, node cover = sum
    of hessians.  ``sample_weight`` overrides the class-derived weights.
    """
    config.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) != len(y) or len(X) == 0:
        raise DataError("X and y must be non-empty and aligned")
    K = int(n_classes if n_classes is not None else y.max() + 1)
    if K < 2:
        raise DataError("need at least two classes")
    if sample_weight is None:
        if balance is None:
            balance = compute_balanced_weights(y, classes=list(range(K)))
        w = gbt_sample_weights(y, balance, K, config.weighting)
    else:
        w = np.asarray(sample_weight, dtype=np.float64)

    binary = K == 2
    n, d = X.shape
    if binary:
        pos = np.sum(w * y)
        base = np.array([np.log(pos / (np.sum(w) - pos))])
        Y = y[:, None].astype(np.float64)
    else:
        prior = np.array([np.sum(w[y == k]) for k in range(K)]) / np.sum(w)
        base = np.log(prior)
        Y = np.eye(K)[y]
    if not np.isfinite(base).all():
        raise DataError("every class needs positive total weight")

    bins = FeatureBins(X)
    rng = np.random.default_rng(config.seed)
    criterion = _split_criterion(config.reg_lambda, config.gamma, config.min_child_weight)
    lam = config.reg_lambda
    margin = np.tile(base, (n, 1))
    trees, tree_class = [], []
    losses = [weighted_logloss(margin[:, 0] if binary else margin, y, w)]
    all_rows = np.arange(n)
    n_feat = max(1, int(round(config.colsample * d)))

    for _ in range(config.n_rounds):
        P = expit(margin) if binary else softmax(margin, axis=1)
        G = w[:, None] * (P - Y)
        H = w[:, None] * P * (1.0 - P)
        rows = all_rows
        if config.subsample < 1:
            rows = np.sort(rng.choice(n, max(1, int(round(config.subsample * n))), replace=False))
        round_trees = []
        for k in range(G.shape[1]):
            stats = np.column_stack([G[:, k], H[:, k], np.ones(n)])
            sampler = None
            if n_feat < d:
                sampler = lambda: np.sort(rng.choice(d, n_feat, replace=False))  # noqa: E731
            tree = grow_tree(
                bins, rows, stats, count_col=2, criterion=criterion,
                leaf_value=lambda s: -s[0] / (s[1] + lam),
                cover=lambda s: float(s[1]),
                max_depth=config.max_depth,
                feature_sampler=sampler,
            )
            round_trees.append(tree)
        if all(t.n_nodes == 1 for t in round_trees):
            break
        for k, tree in enumerate(round_trees):
            margin[:, k] += config.learning_rate * tree.predict(X)[:, 0]
            trees.append(tree)
            tree_class.append(k)
        losses.append(weighted_logloss(margin[:, 0] if binary else margin, y, w))

    return TreeEnsemble(
        trees=trees,
        tree_class=tree_class,
        base_score=base,
        objective="binary_logistic" if binary else "softmax",
        n_classes=K,
        learning_rate=config.learning_rate,
        n_features=d,
        train_loss=losses,
        config=asdict(config),
    )
