import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_ensemble, random_tree
from steppd.attribution import (
    AttributionVector,
    brute_force_shapley,
    cross_task_heatmap,
    expected_margin,
    global_class_summary,
    local_waterfall,
    shap_values,
    tree_shap,
    tree_shap_tree,
)
from steppd.learners.gbt import GBTConfig, TreeEnsemble, train_gbt
from steppd.learners.tree import LEAF, DecisionTree


def _tree(feature, threshold, left, right, value, cover):
    return DecisionTree(np.array(feature), np.array(threshold, dtype=float), np.array(left),
                        np.array(right), np.array(value, dtype=float)[:, None],
                        np.array(cover, dtype=float))


def _ensemble(trees, d, lr=1.0, base=0.0):
    return TreeEnsemble(trees=trees, tree_class=[0] * len(trees), base_score=np.array([base]),
                        objective="binary_logistic", n_classes=2, learning_rate=lr, n_features=d)


def test_single_leaf_gives_zero_attribution():
    t = _tree([LEAF], [0], [LEAF], [LEAF], [1.7], [10])
    a = tree_shap(_ensemble([t], 3, base=0.3), np.array([5.0, 1.0, 2.0]))
    np.testing.assert_array_equal(a.phi, 0.0)
    assert a.base_value == pytest.approx(2.0)
    assert a.margin == pytest.approx(2.0)


@pytest.mark.parametrize("x0,expected_leaf", [(-1.0, 1), (1.0, 2)])
def test_one_split_closed_form(x0, expected_leaf):
    # phi_0 = v(leaf reached) - cover-weighted mean of both leaves
    vals = [0.0, -1.0, 3.0]
    t = _tree([0, LEAF, LEAF], [0.0, 0, 0], [1, LEAF, LEAF], [2, LEAF, LEAF], vals, [4, 3, 1])
    phi = tree_shap_tree(t, np.array([[x0, 9.0]]))
    mean = (3 * -1.0 + 1 * 3.0) / 4
    assert phi[0, 0] == pytest.approx(vals[expected_leaf] - mean, abs=1e-15)
    assert phi[0, 1] == 0.0


def test_symmetric_and_gate():
    # 1[x0 > 0 and x1 > 0] with even covers: v(empty)=1/4, v({i})=1/2, v(both)=1
    t = _tree([0, LEAF, 1, LEAF, LEAF], [0, 0, 0, 0, 0], [1, LEAF, 3, LEAF, LEAF],
              [2, LEAF, 4, LEAF, LEAF], [0, 0, 0, 0, 1], [4, 2, 2, 1, 1])
    phi = tree_shap_tree(t, np.array([[1.0, 1.0, -3.0]]))
    np.testing.assert_allclose(phi[0], [0.375, 0.375, 0.0], atol=1e-15)


def test_missing_cover_is_rejected():
    t = _tree([0, LEAF, LEAF], [0, 0, 0], [1, LEAF, LEAF], [2, LEAF, LEAF], [0, 1, 2], [2, 1, 1])
    t.cover = None
    with pytest.raises(ValueError):
        tree_shap_tree(t, np.zeros((1, 1)))
    t.cover = np.array([0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        tree_shap_tree(t, np.zeros((1, 1)))


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3]))
def test_matches_subset_enumeration(seed, n_classes):
    rng = np.random.default_rng(seed)
    ens = random_ensemble(rng, n_features=5, max_depth=4, n_trees=6, n_classes=n_classes)
    x = rng.normal(size=5)
    fast = tree_shap(ens, x)
    fast = fast if isinstance(fast, list) else [fast]
    for k, a in enumerate(fast):
        slow = brute_force_shapley(ens, x, output=k)
        np.testing.assert_allclose(a.phi, slow.phi, atol=1e-10)
        assert a.base_value == pytest.approx(slow.base_value, abs=1e-10)


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1))
def test_attributions_sum_to_margin(seed):
    rng = np.random.default_rng(seed)
    ens = random_ensemble(rng, n_features=8, max_depth=6, n_trees=15)
    X = rng.normal(size=(20, 8))
    phi, base = shap_values(ens, X)
    np.testing.assert_allclose(base[0] + phi[:, 0].sum(axis=1), ens.margin(X), atol=1e-10)


def test_unused_features_get_zero():
    rng = np.random.default_rng(3)
    ens = random_ensemble(rng, n_features=4, n_trees=5)
    X = np.hstack([rng.normal(size=(30, 4)), rng.normal(size=(30, 2))])
    ens.n_features = 6
    phi, _ = shap_values(ens, X)
    assert np.all(phi[:, 0, 4:] == 0.0)


def test_attributions_add_across_trees():
    rng = np.random.default_rng(11)
    t1, t2 = random_tree(rng, 4, 4), random_tree(rng, 4, 4)
    X = rng.normal(size=(10, 4))
    both = shap_values(_ensemble([t1, t2], 4, lr=0.3), X)[0]
    one = shap_values(_ensemble([t1], 4, lr=0.3), X)[0] + shap_values(_ensemble([t2], 4, lr=0.3), X)[0]
    np.testing.assert_allclose(both, one, atol=1e-14)


def test_trained_models_are_exact():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(150, 6))
    y = (X[:, 0] + X[:, 1] * X[:, 2] > 0).astype(int) + (X[:, 3] > 1)
    ens = train_gbt(X, y, config=GBTConfig(n_rounds=20, max_depth=4))
    base = expected_margin(ens)
    for x in X[:3]:
        for k, a in enumerate(tree_shap(ens, x)):
            slow = brute_force_shapley(ens, x, output=k)
            np.testing.assert_allclose(a.phi, slow.phi, atol=1e-10)
            assert a.base_value == pytest.approx(base[k])
            assert abs(a.residual) < 1e-10


def test_brute_force_refuses_wide_inputs():
    rng = np.random.default_rng(1)
    ens = random_ensemble(rng, n_features=20, max_depth=6, n_trees=20)
    with pytest.raises(ValueError):
        brute_force_shapley(ens, rng.normal(size=20), max_features=3)


# ------------------------------------------------------------------ summaries

def test_cohort_shares_stack_to_total():
    phi = np.array([[1.0, -2.0, 0.0], [3.0, 0.0, 0.0], [-1.0, 1.0, 0.0]])
    s = global_class_summary(phi, ["a", "a", "b"], ["x", "y", "z"], k=5)
    np.testing.assert_allclose(s.cohort_mean_abs, [[2.0, 1.0, 0], [1.0, 1.0, 0]])
    np.testing.assert_allclose(s.cohort_mean_signed, [[2.0, -1.0, 0], [-1.0, 1.0, 0]])
    np.testing.assert_allclose(s.share.sum(axis=0), s.total)
    np.testing.assert_allclose(s.total, [5 / 3, 1.0, 0.0])
    assert s.top_features == ["x", "y"]  # zero-importance z never ranked
    df = s.to_frame()
    assert list(df["feature"]) == ["x", "y"] and "share_a" in df and "mean_signed_b" in df


def test_ties_rank_by_name_and_empty_cohort_raises():
    phi = np.ones((4, 3))
    s = global_class_summary(phi, [0, 0, 1, 1], ["c", "a", "b"], k=2)
    assert s.top_features == ["a", "b"]
    with pytest.raises(ValueError):
        global_class_summary(phi, [0, 0, 1, 1], ["c", "a", "b"], cohort_names=[0, 1, 2])


def _summary(rng, names, task):
    return global_class_summary(rng.normal(size=(20, len(names))), rng.integers(0, 2, 20), names,
                                k=15, task=task)


def test_heatmap_rows_are_union_of_top_lists():
    rng = np.random.default_rng(0)
    same = [f"f{j:02d}" for j in range(15)]
    h = cross_task_heatmap({t: _summary(rng, same, t) for t in "ABC"})
    assert len(h.features) == 15 and not np.isnan(h.values).any()
    disjoint = {t: _summary(rng, [f"{t}{j:02d}" for j in range(15)], t) for t in "ABC"}
    h = cross_task_heatmap(disjoint, metadata={"A00": {"instrument": "I"}})
    assert len(h.features) == 45
    assert np.isnan(h.values).sum() == 90
    peak = np.nanmax(h.values, axis=1)
    assert np.all(np.diff(peak) <= 0)
    assert np.nanmin(h.shade) == 0.0 and np.nanmax(h.shade) == 1.0
    assert {"instrument", "A", "A_shade"} <= set(h.to_frame().columns)


def test_heatmap_needs_three_tasks():
    rng = np.random.default_rng(0)
    names = ["a", "b"]
    with pytest.raises(ValueError):
        cross_task_heatmap({t: _summary(rng, names, t) for t in "AB"})


# ------------------------------------------------------------------ waterfall

def test_waterfall_folds_the_tail():
    a = AttributionVector(np.array([0.5, -2.0, 1.0]), base_value=1.0, margin=0.5)
    w = local_waterfall(a, ["p", "q", "r"], top_n=2, feature_values=[1, 2, 3])
    assert [e.feature for e in w] == ["q", "r", "remaining (1 features)"]
    assert [e.phi for e in w] == [-2.0, 1.0, 0.5]
    assert [e.cumulative for e in w] == [-1.0, 0.0, 0.5]
    assert w[0].feature_value == 2.0


def test_waterfall_of_zero_attribution():
    a = AttributionVector(np.zeros(4), base_value=-0.2)
    w = local_waterfall(a, list("abcd"))
    assert len(w) == 1 and w[0].phi == 0.0 and w[0].cumulative == pytest.approx(-0.2)
    assert w[0].feature == "remaining (4 features)"
