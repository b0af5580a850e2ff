import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from steppd.learners.gbt import TreeEnsemble
from steppd.learners.tree import LEAF, DecisionTree
from steppd.synth import CohortSpec, generate_cohort

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_tree(rng, n_features: int, max_depth: int, n_outputs: int = 1) -> DecisionTree:
    """Random binary tree with consistent covers; features may repeat along a path."""
    feature, threshold, left, right, value, cover = [], [], [], [], [], []

    def grow(depth, c):
        node = len(feature)
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(rng.normal(size=n_outputs))
        cover.append(c)
        if depth < max_depth and rng.random() < 0.8:
            frac = rng.uniform(0.1, 0.9)
            feature[node] = int(rng.integers(n_features))
            threshold[node] = float(rng.normal())
            left[node] = grow(depth + 1, c * frac)
            right[node] = grow(depth + 1, c * (1 - frac))
        return node

    grow(0, float(rng.uniform(1, 100)))
    return DecisionTree(np.array(feature), np.array(threshold), np.array(left), np.array(right),
                        np.array(value), np.array(cover))


def random_ensemble(rng, n_features=6, max_depth=4, n_trees=10, n_classes=2) -> TreeEnsemble:
    outputs = 1 if n_classes == 2 else n_classes
    trees = [random_tree(rng, n_features, max_depth) for _ in range(n_trees)]
    return TreeEnsemble(
        trees=trees,
        tree_class=[t % outputs for t in range(n_trees)],
        base_score=rng.normal(size=outputs),
        objective="binary_logistic" if n_classes == 2 else "softmax",
        n_classes=n_classes,
        learning_rate=float(rng.uniform(0.05, 1.0)),
        n_features=n_features,
    )


@pytest.fixture(scope="session")
def small_cohort(tmp_path_factory):
    """A few dozen visits per class, enough for every split and task."""
    spec = CohortSpec(stage_counts={-1: 60, 1: 20, 2: 40, 3: 20, 4: 6, 5: 4, 101: 3}, seed=7)
    out = tmp_path_factory.mktemp("small_cohort")
    return generate_cohort(spec, out)
