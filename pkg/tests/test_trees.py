import json

import numpy as np
import pytest

from aquaspec.core import DimensionError
from aquaspec.trees import (BoostModel, ForestModel, LEAF, Tree, cart_fit, rf_fit, tree_predict,
                            xgb_fit)


def trees_equal(a: Tree, b: Tree) -> bool:
    return all(np.array_equal(getattr(a, f), getattr(b, f))
               for f in ("feature", "threshold", "left", "right", "value"))


def brute_best_split(X, y, min_leaf=1):
    """Exhaustive best (gain, feature, threshold) by direct SSE evaluation."""
    def sse(v):
        return float(np.sum((v - v.mean()) ** 2)) if v.size else 0.0

    best = (0.0, None, None)
    parent = sse(y)
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for a, b in zip(vals[:-1], vals[1:]):
            t = (a + b) / 2
            left = X[:, f] <= t
            if left.sum() < min_leaf or (~left).sum() < min_leaf:
                continue
            gain = parent - sse(y[left]) - sse(y[~left])
            if gain > best[0] + 1e-9:
                best = (gain, f, t)
    return best


def test_constant_target_single_leaf():
    X = np.random.default_rng(0).normal(size=(20, 3))
    t = cart_fit(X, np.full(20, 4.2))
    assert t.node_count == 1 and t.value[0] == pytest.approx(4.2)


def test_stump_example():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    t = cart_fit(X, [0.0, 0.0, 10.0, 10.0], max_depth=1)
    assert t.feature[0] == 0 and t.threshold[0] == 2.5
    assert sorted(t.value[t.feature == LEAF]) == [0.0, 10.0]
    assert tree_predict(t, [[2.0], [3.0]]).tolist() == [0.0, 10.0]
    assert brute_best_split(X, np.array([0.0, 0, 10, 10]))[1:] == (0, 2.5)


@pytest.mark.parametrize("seed", range(5))
def test_root_split_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(25, 4))
    y = rng.normal(size=25)
    t = cart_fit(X, y, max_depth=1, min_leaf=3)
    gain, f, thr = brute_best_split(X, y, min_leaf=3)
    assert (t.feature[0], t.threshold[0]) == (f, pytest.approx(thr))


def test_memorises_distinct_inputs():
    rng = np.random.default_rng(1)
    X, y = rng.normal(size=(60, 3)), rng.normal(size=60)
    t = cart_fit(X, y, min_leaf=1)
    np.testing.assert_allclose(t.predict(X), y, atol=1e-12)


def test_leaf_values_are_routed_means():
    rng = np.random.default_rng(2)
    X, y = rng.normal(size=(80, 4)), rng.normal(size=80)
    t = cart_fit(X, y, max_depth=4, min_leaf=5)
    leaves = t.apply(X)
    for leaf in np.unique(leaves):
        assert t.value[leaf] == pytest.approx(y[leaves == leaf].mean(), abs=1e-12)
        assert (leaves == leaf).sum() >= 5


def test_rf_single_tree_collapses_to_cart():
    rng = np.random.default_rng(3)
    X, y = rng.normal(size=(50, 5)), rng.normal(size=50)
    f = rf_fit(X, y, n_trees=1, mtry=5, min_leaf=2, bootstrap=False, seed=9)
    assert trees_equal(f.trees[0], cart_fit(X, y, min_leaf=2))


def test_rf_constant_target():
    X = np.random.default_rng(4).normal(size=(30, 3))
    for seed in (0, 1):
        f = rf_fit(X, np.full(30, -2.0), n_trees=5, seed=seed)
        np.testing.assert_allclose(f.predict(X), -2.0)


def test_rf_deterministic_and_thread_independent():
    rng = np.random.default_rng(5)
    X, y = rng.normal(size=(40, 6)), rng.normal(size=40)
    a = rf_fit(X, y, n_trees=8, seed=11)
    b = rf_fit(X, y, n_trees=8, seed=11)
    c = rf_fit(X, y, n_trees=8, seed=11, n_jobs=3)
    for ta, tb, tc in zip(a.trees, b.trees, c.trees):
        assert trees_equal(ta, tb) and trees_equal(ta, tc)
    assert a.mtry == 2  # ceil(6 / 3)


def test_rf_prediction_within_tree_range():
    rng = np.random.default_rng(6)
    X, y = rng.normal(size=(40, 3)), rng.normal(size=40)
    f = rf_fit(X, y, n_trees=10, seed=1)
    Q = rng.normal(size=(15, 3))
    per_tree = f.tree_predictions(Q)
    p = f.predict(Q)
    assert np.all(p >= per_tree.min(0) - 1e-12) and np.all(p <= per_tree.max(0) + 1e-12)


def test_identical_trees_forest():
    rng = np.random.default_rng(7)
    X, y = rng.normal(size=(20, 2)), rng.normal(size=20)
    t = cart_fit(X, y, max_depth=3)
    f = ForestModel([t, t, t], mtry=2, min_leaf=1, max_depth=3, seed=0)
    np.testing.assert_allclose(f.predict(X), t.predict(X), atol=1e-15)


def test_xgb_zero_rounds_predicts_mean():
    rng = np.random.default_rng(8)
    X, y = rng.normal(size=(10, 2)), rng.normal(size=10)
    m = xgb_fit(X, y, n_rounds=0)
    np.testing.assert_allclose(m.predict(X), y.mean())


def test_xgb_one_deep_round_interpolates():
    rng = np.random.default_rng(9)
    X, y = rng.normal(size=(50, 3)), rng.normal(size=50)
    m = xgb_fit(X, y, n_rounds=1, eta=1.0, lam=0.0, max_depth=None)
    assert np.max(np.abs(m.predict(X) - y)) < 1e-10


@pytest.mark.parametrize("eta,lam", [(0.3, 1.0), (1.0, 0.0), (0.7, 5.0)])
def test_xgb_training_rmse_non_increasing(eta, lam):
    rng = np.random.default_rng(10)
    X = rng.normal(size=(60, 4))
    y = X[:, 0] ** 2 + rng.normal(size=60) * 0.1
    m = xgb_fit(X, y, n_rounds=20, eta=eta, lam=lam)
    assert np.all(np.diff(m.train_rmse) <= 1e-12)


def test_xgb_heavy_regularisation_keeps_base_score():
    rng = np.random.default_rng(11)
    X, y = rng.normal(size=(30, 2)), rng.normal(size=30)
    m = xgb_fit(X, y, n_rounds=5, lam=1e15)
    np.testing.assert_allclose(m.predict(X), y.mean(), atol=1e-10)


def test_xgb_leaf_weight_formula():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([1.0, 1.0, 5.0, 5.0])
    m = xgb_fit(X, y, n_rounds=1, eta=1.0, lam=1.0, max_depth=1)
    t = m.trees[0]
    # gradients are pred - y = 3 - y: left G = 4, right G = -4, H = 2 each
    assert sorted(t.value[t.feature == LEAF]) == pytest.approx([-4 / 3, 4 / 3])


def test_monotone_feature_transform_keeps_partitions():
    rng = np.random.default_rng(12)
    X = rng.uniform(0.1, 2, size=(40, 3))
    y = np.sin(3 * X[:, 0]) + X[:, 1] + rng.normal(size=40) * 0.05
    Xt = X.copy()
    Xt[:, 1] = np.exp(3 * X[:, 1])
    a, b = cart_fit(X, y, max_depth=3), cart_fit(Xt, y, max_depth=3)
    assert np.array_equal(a.apply(X), b.apply(Xt))
    fa, fb = rf_fit(X, y, n_trees=3, seed=2), rf_fit(Xt, y, n_trees=3, seed=2)
    np.testing.assert_allclose(fa.predict(X), fb.predict(Xt), atol=1e-12)
    ga, gb = xgb_fit(X, y, n_rounds=5), xgb_fit(Xt, y, n_rounds=5)
    np.testing.assert_allclose(ga.predict(X), gb.predict(Xt), atol=1e-12)


def test_dimension_checks():
    t = cart_fit(np.ones((3, 2)) * [[1], [2], [3]], [1.0, 2.0, 3.0])
    with pytest.raises(DimensionError):
        t.predict(np.ones((2, 3)))
    with pytest.raises(ValueError):
        cart_fit(np.empty((0, 2)), np.empty(0))


def test_json_round_trips():
    rng = np.random.default_rng(13)
    X, y = rng.normal(size=(30, 3)), rng.normal(size=30)
    f = rf_fit(X, y, n_trees=3, seed=1)
    f2 = ForestModel.from_dict(json.loads(json.dumps(f.to_dict())))
    np.testing.assert_array_equal(f2.predict(X), f.predict(X))
    b = xgb_fit(X, y, n_rounds=4)
    b2 = BoostModel.from_dict(json.loads(json.dumps(b.to_dict())))
    np.testing.assert_array_equal(b2.predict(X), b.predict(X))
