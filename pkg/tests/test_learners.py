import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from steppd.errors import ConfigError, ConvergenceError, DataError
from steppd.learners import (
    ForestConfig,
    GBTConfig,
    LogisticConfig,
    TreeEnsemble,
    compute_balanced_weights,
    compute_scale_pos_weight,
    dumps_model,
    fit_model,
    knn_predict,
    model_from_dict,
    train_gbt,
    train_knn,
    train_logistic,
    train_random_forest,
)
from steppd.learners.logistic import logistic_objective
from steppd.learners.tree import LEAF


# ------------------------------------------------------------------ balance

@pytest.mark.parametrize("counts,expected", [((10, 10), 1.0), ((100, 4), 25.0),
                                             ((7689, 553), 7689 / 553)])
def test_scale_pos_weight(counts, expected):
    y = np.repeat([0, 1], counts)
    assert compute_scale_pos_weight(y) == pytest.approx(expected, rel=1e-15)


def test_scale_pos_weight_of_reference_cohort():
    y = np.repeat([0, 1], [7689, 553])
    assert compute_scale_pos_weight(y) == pytest.approx(13.9042, abs=5e-5)


def test_balanced_weights_examples():
    info = compute_balanced_weights(np.repeat([0, 1], [9, 1]))
    assert info.per_class_weight[0] == pytest.approx(10 / 18)
    assert info.per_class_weight[1] == pytest.approx(5.0)
    assert info.minority == 1
    even = compute_balanced_weights(np.repeat([0, 1, 2], 4))
    assert all(w == 1.0 for w in even.per_class_weight.values())


def test_missing_class_raises():
    with pytest.raises(ValueError):
        compute_balanced_weights(np.zeros(5, dtype=int), classes=[0, 1])
    with pytest.raises(ValueError):
        compute_scale_pos_weight(np.zeros(5, dtype=int))


@given(st.lists(st.integers(1, 500), min_size=2, max_size=5))
def test_balanced_weights_preserve_total_mass(counts):
    y = np.repeat(np.arange(len(counts)), counts)
    info = compute_balanced_weights(y)
    total = sum(n * info.per_class_weight[c] for c, n in enumerate(counts))
    assert total == pytest.approx(len(y), rel=1e-12)
    assert info.scale_pos_weight == max(counts) / min(counts)


# ------------------------------------------------------------------ logistic

def _fd_grad(f, theta, eps=1e-6):
    g = np.zeros_like(theta)
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = eps
        g[i] = (f(theta + e) - f(theta - e)) / (2 * eps)
    return g


@pytest.mark.parametrize("n_classes", [2, 3])
def test_logistic_gradient_matches_finite_differences(n_classes):
    rng = np.random.default_rng(n_classes)
    for _ in range(5):
        X = rng.normal(size=(5, 4))
        y = rng.integers(0, n_classes, 5)
        w = rng.uniform(0.5, 3.0, 5)
        C = 1 if n_classes == 2 else n_classes
        theta = rng.normal(size=4 * C + C)
        _, g = logistic_objective(theta, X, y, w, 0.3, n_classes)
        fd = _fd_grad(lambda t: logistic_objective(t, X, y, w, 0.3, n_classes)[0], theta)
        assert np.max(np.abs(g - fd)) <= 1e-5 * max(1.0, np.max(np.abs(fd)))


def test_logistic_separable_toy_set_fits_perfectly():
    X = np.array([[0, 0], [0, 1], [1, 0], [3, 3], [3, 4], [4, 3]], dtype=float)
    y = np.array([0, 0, 0, 1, 1, 1])
    m = train_logistic(X, y, config=LogisticConfig(l2=0.01))
    assert np.all(m.predict(X) == y)


def test_logistic_zero_iterations_predict_weighted_base_rate():
    X = np.random.default_rng(0).normal(size=(10, 3))
    y = np.array([1, 0, 0, 0, 1, 0, 0, 0, 0, 0])
    plain = train_logistic(X, y, config=LogisticConfig(max_iter=0, class_weight=None))
    np.testing.assert_allclose(plain.predict_proba(X)[:, 1], 0.2)
    balanced = train_logistic(X, y, config=LogisticConfig(max_iter=0))
    np.testing.assert_allclose(balanced.predict_proba(X)[:, 1], 0.5)


def test_logistic_nonconvergence_reports_gradient():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(50, 5))
    y = (X[:, 0] + rng.normal(size=50) > 0).astype(int)
    with pytest.raises(ConvergenceError) as info:
        train_logistic(X, y, config=LogisticConfig(max_iter=1, tol=1e-12))
    assert info.value.grad_norm > 0


def test_logistic_objective_ignores_common_weight_scale():
    rng = np.random.default_rng(2)
    X, y, w = rng.normal(size=(8, 3)), rng.integers(0, 2, 8), rng.uniform(1, 2, 8)
    theta = rng.normal(size=4)
    a = logistic_objective(theta, X, y, w, 0.1, 2)
    b = logistic_objective(theta, X, y, 7.5 * w, 0.1, 2)
    assert a[0] == pytest.approx(b[0], rel=1e-12)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-12)


def test_multinomial_logistic_probabilities_sum_to_one():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(60, 4))
    y = np.argmax(X[:, :3], axis=1)
    m = train_logistic(X, y, n_classes=3)
    np.testing.assert_allclose(m.predict_proba(X).sum(axis=1), 1.0, atol=1e-12)
    assert (m.predict(X) == y).mean() > 0.8


# ------------------------------------------------------------------ GBT

def _toy():
    X = np.array([[0.0, 5.0], [0.0, 1.0], [1.0, 5.0], [1.0, 1.0]])
    y = np.array([0, 0, 1, 1])
    return X, y


def test_gbt_empty_ensemble_predicts_sigmoid_of_base():
    X, y = _toy()
    m = train_gbt(X, y, config=GBTConfig(n_rounds=0))
    np.testing.assert_allclose(m.predict_proba(X)[:, 1], expit(m.base_score[0]))
    zero = TreeEnsemble([], [], np.zeros(1), "binary_logistic", 2, 0.1, 2)
    np.testing.assert_allclose(zero.predict_proba(X), 0.5)


def test_gbt_first_split_matches_hand_computation():
    X, y = _toy()
    m = train_gbt(X, y, config=GBTConfig(n_rounds=1, max_depth=1, min_child_weight=0.0,
                                         learning_rate=1.0), sample_weight=np.ones(4))
    t = m.trees[0]
    # base log-odds 0 -> p = 0.5, g = p - y, h = 1/4; G_L = 1, G_R = -1, H = 1/2 each
    assert m.base_score[0] == 0.0
    assert t.feature[0] == 0 and t.threshold[0] == 0.5
    np.testing.assert_allclose(t.value[[1, 2], 0], [-1 / 1.5, 1 / 1.5], atol=1e-15)
    np.testing.assert_allclose(t.cover, [1.0, 0.5, 0.5])


def test_gbt_gain_threshold_gamma_blocks_weak_split():
    X, y = _toy()
    # the only useful split has gain 2/3; gamma above it leaves the base score alone
    m = train_gbt(X, y, config=GBTConfig(n_rounds=3, max_depth=1, min_child_weight=0.0,
                                         gamma=0.7), sample_weight=np.ones(4))
    assert m.trees == []


def test_gbt_margin_is_base_plus_leaf_sum():
    rng = np.random.default_rng(4)
    X = rng.integers(0, 5, (200, 6)).astype(float)
    y = (X[:, 0] + X[:, 3] + rng.normal(size=200) > 4).astype(int)
    m = train_gbt(X, y, config=GBTConfig(n_rounds=15, max_depth=3))
    manual = m.base_score[0] + sum(m.learning_rate * t.predict(X)[:, 0] for t in m.trees)
    np.testing.assert_allclose(m.margin(X), manual, atol=1e-12)
    for t in m.trees:
        t.check_cover()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 1.0), st.integers(1, 4), st.sampled_from([2, 3]))
def test_gbt_training_loss_never_increases(seed, lr, depth, k):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 4, (80, 4)).astype(float)
    y = rng.integers(0, k, 80)
    y[:k] = np.arange(k)
    m = train_gbt(X, y, config=GBTConfig(n_rounds=8, learning_rate=lr, max_depth=depth),
                  n_classes=k)
    assert np.all(np.diff(m.train_loss) <= 1e-12)


def test_gbt_softmax_rows_sum_to_one_and_dimension_is_checked():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(90, 3))
    y = np.repeat([0, 1, 2], 30)
    m = train_gbt(X, y, config=GBTConfig(n_rounds=5))
    np.testing.assert_allclose(m.predict_proba(X).sum(axis=1), 1.0, atol=1e-12)
    assert len(m.trees) % 3 == 0
    with pytest.raises(DataError):
        m.predict_proba(X[:, :2])


def test_gbt_serialization_is_deterministic_and_round_trips():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(100, 5))
    y = (X[:, 1] > 0).astype(int)
    cfg = GBTConfig(n_rounds=10, subsample=0.8, colsample=0.6, seed=11)
    a, b = train_gbt(X, y, config=cfg), train_gbt(X, y, config=cfg)
    assert dumps_model(a) == dumps_model(b)
    back = model_from_dict(json.loads(dumps_model(a)))
    np.testing.assert_array_equal(back.margin(X), a.margin(X))


@pytest.mark.parametrize("scale", [0.25, 4.0, 1000.0])
def test_gbt_and_logistic_decisions_invariant_to_class_weight_scale(scale):
    rng = np.random.default_rng(7)
    X = rng.normal(size=(150, 4))
    y = np.digitize(X[:, 0] + 0.5 * rng.normal(size=150), [-0.5, 1.2])
    info = compute_balanced_weights(y)
    scaled = replace(info, per_class_weight={c: scale * w for c, w in info.per_class_weight.items()})
    cfg = GBTConfig(n_rounds=10)
    a, b = train_gbt(X, y, balance=info, config=cfg), train_gbt(X, y, balance=scaled, config=cfg)
    np.testing.assert_array_equal(a.predict(X), b.predict(X))
    la, lb = train_logistic(X, y, weights=info), train_logistic(X, y, weights=scaled)
    np.testing.assert_array_equal(la.predict(X), lb.predict(X))


def test_invalid_gbt_config_is_rejected():
    X, y = _toy()
    with pytest.raises(ConfigError):
        train_gbt(X, y, config=GBTConfig(learning_rate=0.0))


# ------------------------------------------------------------------ forest

def test_forest_stump_splits_on_informative_feature():
    rng = np.random.default_rng(8)
    X = np.column_stack([rng.integers(0, 2, 100), rng.normal(size=100)]).astype(float)
    y = X[:, 0].astype(int)
    y[:5] = 1 - y[:5]  # keep the noise feature from being pure by chance
    f = train_random_forest(X, y, config=ForestConfig(n_trees=1, max_depth=1,
                                                      features_per_split="all", bootstrap=False))
    assert f.trees[0].feature[0] == 0


def test_forest_pure_node_becomes_leaf():
    X = np.arange(10, dtype=float)[:, None]
    y = np.zeros(10, dtype=int)
    y[0] = 1
    g = train_random_forest(X, y, config=ForestConfig(n_trees=1, max_depth=5, bootstrap=False,
                                                      features_per_split="all"))
    t = g.trees[0]
    assert t.n_nodes == 3 and t.threshold[0] == 0.5


def test_forest_is_deterministic_per_seed_and_validates():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(80, 6))
    y = (X[:, 0] > 0).astype(int)
    cfg = ForestConfig(n_trees=5, max_depth=4, seed=3)
    assert dumps_model(train_random_forest(X, y, config=cfg)) == \
        dumps_model(train_random_forest(X, y, config=cfg))
    for bad in (ForestConfig(n_trees=0), ForestConfig(max_depth=0)):
        with pytest.raises(ConfigError):
            train_random_forest(X, y, config=bad)
    p = train_random_forest(X, y, config=cfg).predict_proba(X)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


# ------------------------------------------------------------------ knn

def test_knn_votes_and_tie_break():
    X = np.array([[0.0], [1.0], [2.0], [10.0]])
    y = np.array([0, 0, 1, 1])
    m = train_knn(X, y, k=3)
    np.testing.assert_allclose(knn_predict(m, [0.5]), [2 / 3, 1 / 3])
    tie = train_knn(np.array([[0.0], [2.0]]), np.array([1, 0]), k=2)
    assert tie.predict(np.array([[1.0]]))[0] == 0
    full = train_knn(X, y, k=4)
    np.testing.assert_allclose(full.predict_proba(np.array([[100.0]])), [[0.5, 0.5]])


def test_knn_self_neighbour_and_bounds():
    rng = np.random.default_rng(10)
    X = rng.normal(size=(20, 3))
    y = rng.integers(0, 3, 20)
    m = train_knn(X, y, k=1, n_classes=3)
    assert np.all(m.predict_proba(X)[np.arange(20), y] == 1.0)
    with pytest.raises(ConfigError):
        train_knn(X, y, k=21)
    assert m.to_dict()["training_ref"].startswith("sha256:")


def test_fit_model_dispatch():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(40, 3))
    y = (X[:, 0] > 0).astype(int)
    for name, params in [("gbt", {"n_rounds": 3}), ("logistic", {"l2": 0.1}),
                         ("knn", {"k": 3}), ("random_forest", {"n_trees": 3})]:
        p = fit_model(name, X, y, params, 2, seed=0).predict_proba(X)
        assert p.shape == (40, 2)
    with pytest.raises(ValueError):
        fit_model("svm", X, y, {}, 2)


def test_tree_leaf_marker():
    X, y = _toy()
    m = train_gbt(X, y, config=GBTConfig(n_rounds=1, max_depth=1, min_child_weight=0.0))
    assert m.trees[0].feature[1] == LEAF
