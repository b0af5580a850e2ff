"""Path-dependent Shapley attributions for tree ensembles and their summaries.

The explained game is the tree-conditional expectation: features in a
coalition follow the sample's branch, the others are marginalised by the
cover fractions of both children.  Every value is in margin (log-odds)
space, so ``base_value + phi.sum() == margin(x)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np
import pandas as pd

from .learners.gbt import TreeEnsemble
from .learners.tree import LEAF, DecisionTree

METHOD = "path-dependent TreeSHAP (cover-weighted), margin space"


@dataclass
class AttributionVector:
    phi: np.ndarray
    base_value: float
    margin: float | None = None
    output: int = 0
    sample_id: str = ""

    @property
    def residual(self) -> float:
        """base + sum(phi) - margin; zero up to rounding for exact attributions."""
        if self.margin is None:
            return float("nan")
        return float(self.base_value + self.phi.sum() - self.margin)


def _check_covers(tree: DecisionTree) -> None:
    cover = getattr(tree, "cover", None)
    if cover is None or len(cover) != tree.n_nodes or not np.all(np.isfinite(cover)):
        raise ValueError("tree lacks node cover statistics")
    if cover[0] <= 0:
        raise ValueError("tree root has non-positive cover")


def _leaf_paths(tree: DecisionTree):
    """For each leaf: (value row, {feature: (zero_fraction, [(threshold, goes_left)])})."""
    out = []
    stack = [(0, {})]
    while stack:
        node, path = stack.pop()
        if tree.feature[node] == LEAF:
            out.append((tree.value[node], path))
            continue
        f, thr = int(tree.feature[node]), float(tree.threshold[node])
        for child, goes_left in ((tree.left[node], True), (tree.right[node], False)):
            frac = tree.cover[child] / tree.cover[node]
            z, conds = path.get(f, (1.0, []))
            new = dict(path)
            new[f] = (z * frac, conds + [(thr, goes_left)])
            stack.append((child, new))
    return out


def _shapley_weights(u: int) -> np.ndarray:
    return np.array([factorial(s) * factorial(u - s - 1) / factorial(u) for s in range(u)])


def tree_shap_tree(tree: DecisionTree, X: np.ndarray, output: int = 0) -> np.ndarray:
    """(n, d) attributions of one tree's output column for every row of X.

    Each leaf contributes value * prod_g (x in S ? one_g : zero_g) over the
    unique features g on its path, where one_g says whether x satisfies all
    of g's conditions and zero_g is the product of g's cover fractions.  The
    Shapley sum over coalitions then reduces to the coefficients of
    prod_{g != f} (zero_g + one_g t), weighted by |S|! (u-|S|-1)! / u!.
    """
    _check_covers(tree)
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    phi = np.zeros((n, d))
    for value, path in _leaf_paths(tree):
        if not path:
            continue
        v = float(value[output])
        feats = list(path)
        u = len(feats)
        zero = np.array([path[f][0] for f in feats])
        one = np.ones((u, n))
        for i, f in enumerate(feats):
            for thr, goes_left in path[f][1]:
                one[i] *= (X[:, f] <= thr) if goes_left else (X[:, f] > thr)
        w = _shapley_weights(u)
        for i, f in enumerate(feats):
            # polynomial in t, coefficient s = subsets of size s drawn from the others
            poly = np.zeros((u, n))
            poly[0] = 1.0
            deg = 0
            for j in range(u):
                if j == i:
                    continue
                poly[1:deg + 2] = poly[1:deg + 2] * zero[j] + poly[:deg + 1] * one[j]
                poly[0] *= zero[j]
                deg += 1
            phi[:, f] += v * (one[i] - zero[i]) * (w[:, None] * poly).sum(axis=0)
    return phi


def expected_margin(ensemble: TreeEnsemble) -> np.ndarray:
    """v(empty coalition) per output: base score plus cover-weighted tree means."""
    base = np.array(ensemble.base_score, dtype=np.float64)
    for tree, k in zip(ensemble.trees, ensemble.tree_class):
        _check_covers(tree)
        base[k] += ensemble.learning_rate * tree.expected_value()[0]
    return base


def shap_values(ensemble: TreeEnsemble, X) -> tuple[np.ndarray, np.ndarray]:
    """Attributions for a batch: phi (n, C, d) and base values (C,), C = outputs."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    C = ensemble.n_outputs
    phi = np.zeros((len(X), C, X.shape[1]))
    for tree, k in zip(ensemble.trees, ensemble.tree_class):
        phi[:, k] += ensemble.learning_rate * tree_shap_tree(tree, X)
    return phi, expected_margin(ensemble)


def tree_shap(ensemble: TreeEnsemble, x, sample_id: str = ""):
    """Attribution of one sample; a list with one vector per class for softmax models."""
    x = np.asarray(x, dtype=np.float64)
    phi, base = shap_values(ensemble, x[None, :])
    margin = np.atleast_1d(ensemble.margin(x[None, :])[0])
    vecs = [AttributionVector(phi[0, k], float(base[k]), float(margin[k]), k, sample_id)
            for k in range(phi.shape[1])]
    return vecs[0] if len(vecs) == 1 else vecs


def _subset_values(tree: DecisionTree, x: np.ndarray, active: list[int], output: int):
    """v(S) for every coalition S of ``active`` (bitmask index) for one tree."""
    a = len(active)
    masks = np.arange(2 ** a)
    col = {f: j for j, f in enumerate(active)}
    member = {f: ((masks >> j) & 1).astype(bool) for f, j in col.items()}

    def value(node):
        f = tree.feature[node]
        if f == LEAF:
            return np.full(len(masks), tree.value[node, output])
        left, right = tree.left[node], tree.right[node]
        lv, rv = value(left), value(right)
        follow = lv if x[f] <= tree.threshold[node] else rv
        marg = (tree.cover[left] * lv + tree.cover[right] * rv) / tree.cover[node]
        return np.where(member[int(f)], follow, marg)

    return value(0)


def brute_force_shapley(ensemble: TreeEnsemble, x, max_features: int = 12, output: int = 0,
                        ) -> AttributionVector:
    """Shapley values by enumerating every coalition of the features the trees use.

    Features no tree splits on are dummies and get exactly 0.
    """
    x = np.asarray(x, dtype=np.float64)
    active = sorted({f for t, k in zip(ensemble.trees, ensemble.tree_class) if k == output
                     for f in t.used_features()})
    a = len(active)
    if a > max_features:
        raise ValueError(f"{a} active features exceed the enumeration cap of {max_features}")
    v = np.full(2 ** a, float(ensemble.base_score[output]))
    for tree, k in zip(ensemble.trees, ensemble.tree_class):
        if k == output:
            _check_covers(tree)
            v += ensemble.learning_rate * _subset_values(tree, x, active, output=0)
    phi = np.zeros(len(x))
    masks = np.arange(2 ** a)
    sizes = np.array([bin(m).count("1") for m in masks])
    weights = np.array([factorial(s) * factorial(a - s - 1) / factorial(a) if s < a else 0.0
                        for s in range(a + 1)])
    for j, f in enumerate(active):
        without = masks[(masks >> j) & 1 == 0]
        phi[f] = np.sum(weights[sizes[without]] * (v[without | (1 << j)] - v[without]))
    margin = np.atleast_1d(ensemble.margin(x[None, :])[0])[output]
    return AttributionVector(phi, float(v[0]), float(margin), output)


@dataclass
class GlobalSummary:
    """Per-cohort mean |phi| and its stacked decomposition of the combined mean.

    ``share[c, j] = n_c / N * cohort_mean_abs[c, j]`` so the cohort shares of
    a feature add up to ``total[j]``, the combined-cohort mean |phi|.
    """

    feature_names: list[str]
    cohorts: list[str]
    counts: np.ndarray
    cohort_mean_abs: np.ndarray
    cohort_mean_signed: np.ndarray
    share: np.ndarray
    total: np.ndarray
    top: list[int]
    task: str = ""

    @property
    def top_features(self) -> list[str]:
        return [self.feature_names[j] for j in self.top]

    def to_frame(self, all_features: bool = False) -> pd.DataFrame:
        idx = range(len(self.feature_names)) if all_features else self.top
        rows = []
        for rank, j in enumerate(idx, start=1):
            row = {"rank": rank, "feature": self.feature_names[j],
                   "mean_abs_total": self.total[j]}
            for c, name in enumerate(self.cohorts):
                row[f"share_{name}"] = self.share[c, j]
            for c, name in enumerate(self.cohorts):
                row[f"mean_abs_{name}"] = self.cohort_mean_abs[c, j]
            for c, name in enumerate(self.cohorts):
                row[f"mean_signed_{name}"] = self.cohort_mean_signed[c, j]
            rows.append(row)
        return pd.DataFrame(rows)


def rank_features(total: np.ndarray, names: list[str], k: int) -> list[int]:
    """Top-k by value, ties broken by name; zero-importance features are never ranked."""
    order = sorted((j for j in range(len(names)) if total[j] > 0),
                   key=lambda j: (-total[j], names[j]))
    return order[:k]


def global_class_summary(phi, labels, feature_names, k: int = 15, cohort_names=None,
                         task: str = "") -> GlobalSummary:
    """``phi`` is (n, d) (one output per sample); ``labels`` assigns samples to cohorts."""
    phi = np.asarray(phi, dtype=np.float64)
    labels = np.asarray(labels)
    cohorts = list(cohort_names) if cohort_names is not None else sorted(set(labels.tolist()))
    n = len(phi)
    if n == 0:
        raise ValueError("no attributions to summarise")
    counts, mean_abs, mean_signed = [], [], []
    for c in cohorts:
        rows = phi[labels == c]
        if len(rows) == 0:
            raise ValueError(f"cohort {c!r} has no samples")
        counts.append(len(rows))
        mean_abs.append(np.abs(rows).mean(axis=0))
        mean_signed.append(rows.mean(axis=0))
    counts = np.array(counts)
    mean_abs = np.vstack(mean_abs)
    share = counts[:, None] / n * mean_abs
    total = np.abs(phi[np.isin(labels, cohorts)]).mean(axis=0)
    names = list(feature_names)
    return GlobalSummary(
        feature_names=names,
        cohorts=[str(c) for c in cohorts],
        counts=counts,
        cohort_mean_abs=mean_abs,
        cohort_mean_signed=np.vstack(mean_signed),
        share=share,
        total=total,
        top=rank_features(total, names, k),
        task=task,
    )


@dataclass
class HeatmapTable:
    features: list[str]
    tasks: list[str]
    values: np.ndarray  # NaN where a feature is outside that task's top-k
    shade: np.ndarray  # per-column min-max scaled values in [0, 1]
    metadata: dict = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame({"feature": self.features})
        for key in ("instrument", "domain", "nf"):
            if self.metadata:
                df[key] = [self.metadata.get(f, {}).get(key, "") for f in self.features]
        for t, task in enumerate(self.tasks):
            df[task] = self.values[:, t]
        for t, task in enumerate(self.tasks):
            df[f"{task}_shade"] = self.shade[:, t]
        return df


def cross_task_heatmap(summaries: dict[str, GlobalSummary], k: int = 15,
                       metadata: dict | None = None) -> HeatmapTable:
    """Rows = union of each task's top-k; cells = combined-cohort mean |phi|."""
    if len(summaries) < 3:
        raise ValueError("the cross-task heatmap needs the three binary-task summaries")
    tasks = list(summaries)
    tops = {t: rank_features(s.total, s.feature_names, k) for t, s in summaries.items()}
    union = sorted({summaries[t].feature_names[j] for t in tasks for j in tops[t]})
    values = np.full((len(union), len(tasks)), np.nan)
    for c, t in enumerate(tasks):
        s = summaries[t]
        for j in tops[t]:
            values[union.index(s.feature_names[j]), c] = s.total[j]
    peak = np.nanmax(values, axis=1)
    order = sorted(range(len(union)), key=lambda r: (-peak[r], union[r]))
    values = values[order]
    union = [union[r] for r in order]
    shade = np.full_like(values, np.nan)
    for c in range(len(tasks)):
        col = values[:, c]
        ok = ~np.isnan(col)
        lo, hi = col[ok].min(), col[ok].max()
        shade[ok, c] = 1.0 if hi == lo else (col[ok] - lo) / (hi - lo)
    return HeatmapTable(union, tasks, values, shade, metadata or {})


@dataclass
class WaterfallEntry:
    feature: str
    phi: float
    cumulative: float
    feature_value: float | None = None


def local_waterfall(attr: AttributionVector, feature_names, top_n: int = 10,
                    feature_values=None) -> list[WaterfallEntry]:
    """Largest |phi| first, the rest folded into one "remaining" entry.

    Starting from ``attr.base_value`` the running sum ends at base + sum(phi),
    i.e. the model margin.  The remaining entry is always present (0 when
    nothing is left over).
    """
    phi = np.asarray(attr.phi, dtype=np.float64)
    names = list(feature_names)
    nonzero = [j for j in range(len(phi)) if phi[j] != 0]
    order = sorted(nonzero, key=lambda j: (-abs(phi[j]), names[j]))
    shown = order[:top_n]
    rest = [j for j in range(len(phi)) if j not in set(shown)]
    entries, running = [], attr.base_value
    for j in shown:
        running += phi[j]
        value = None if feature_values is None else float(feature_values[j])
        entries.append(WaterfallEntry(names[j], float(phi[j]), float(running), value))
    remainder = float(phi[rest].sum()) if rest else 0.0
    running += remainder
    entries.append(WaterfallEntry(f"remaining ({len(rest)} features)", remainder, float(running)))
    return entries
