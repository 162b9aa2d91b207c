import json
import math

import numpy as np
import pytest

from aquaspec.core import DimensionError
from aquaspec.kernel import (ConvergenceWarning, SvrModel, rbf_kernel, rbf_matrix, svr_fit,
                             svr_predict)

from oracles import svr_dual_value, svr_three_point_grid


def full_beta(model, n):
    beta = np.zeros(n)
    beta[model.support_indices] = model.dual_coeffs
    return beta


def test_rbf_examples():
    assert rbf_kernel([1.0, 2.0], [1.0, 2.0], 0.7) == 1.0
    assert rbf_kernel([0.0, 0.0], [1.0, 0.0], 1.0) == pytest.approx(math.exp(-1), abs=1e-12)
    assert rbf_kernel([0.0], [5.0], 1e-12) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(DimensionError):
        rbf_kernel([0.0], [1.0, 2.0], 1.0)


def test_rbf_matrix_matches_pairwise():
    rng = np.random.default_rng(0)
    A, B = rng.normal(size=(4, 3)), rng.normal(size=(5, 3))
    M = rbf_matrix(A, B, 0.3)
    for i in range(4):
        for j in range(5):
            assert M[i, j] == pytest.approx(rbf_kernel(A[i], B[j], 0.3), abs=1e-12)


def test_constant_target_inside_tube():
    X = np.random.default_rng(1).normal(size=(10, 2))
    m = svr_fit(X, np.full(10, 3.5), epsilon=0.1)
    assert m.dual_coeffs.size == 0
    assert m.bias == pytest.approx(3.5)
    np.testing.assert_allclose(svr_predict(m, X), 3.5)


def test_three_point_dual_matches_exhaustive_grid():
    X = np.array([[0.0], [1.0], [2.0]])
    y = np.array([0.0, 1.0, 2.0])
    m = svr_fit(X, y, C=10, epsilon=0.01, gamma=1.0, tol=1e-3)
    K = rbf_matrix(X, X, 1.0)
    got = svr_dual_value(full_beta(m, 3), K, y, 0.01)
    best, _ = svr_three_point_grid(K, y, 10.0, 0.01)
    assert abs(got - best) < 1e-4
    assert m.kkt_violation < 1e-3


def test_dual_feasibility_and_kkt():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(80, 3))
    y = np.sin(X[:, 0]) + 0.3 * X[:, 1] + rng.normal(size=80) * 0.1
    C, eps, tol = 2.0, 0.1, 1e-3
    m = svr_fit(X, y, C=C, epsilon=eps, tol=tol)
    assert m.converged and m.kkt_violation < tol
    assert abs(m.dual_coeffs.sum()) < 1e-8
    assert np.all(np.abs(m.dual_coeffs) <= C + 1e-12)
    beta = full_beta(m, 80)
    resid = y - svr_predict(m, X)
    inside = np.abs(resid) < eps - tol
    assert np.all(beta[inside] == 0)
    # points strictly outside the tube sit at the bound
    outside = np.abs(resid) > eps + tol
    np.testing.assert_allclose(np.abs(beta[outside]), C, atol=1e-9)


def test_objective_non_decreasing_in_debug_mode():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(30, 2))
    y = X[:, 0] - X[:, 1] ** 2
    svr_fit(X, y, C=5.0, epsilon=0.05, debug=True)
    svr_fit(X, y, C=5.0, epsilon=0.05, debug=True, selection="random", seed=4)


def test_random_pair_mode_agrees():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(25, 2))
    y = np.cos(X[:, 0]) + X[:, 1]
    K = rbf_matrix(X, X, 0.5)
    a = svr_fit(X, y, C=3.0, epsilon=0.05, gamma=0.5, tol=1e-6)
    b = svr_fit(X, y, C=3.0, epsilon=0.05, gamma=0.5, tol=1e-6, selection="random", seed=1)
    va = svr_dual_value(full_beta(a, 25), K, y, 0.05)
    vb = svr_dual_value(full_beta(b, 25), K, y, 0.05)
    assert va == pytest.approx(vb, abs=1e-6)


def test_duplicate_rows_do_not_change_predictions():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(15, 2))
    y = X[:, 0] * 2 + np.sin(X[:, 1])
    Xd, yd = np.vstack([X, X[:5]]), np.concatenate([y, y[:5]])
    a = svr_fit(X, y, C=100.0, epsilon=0.05, gamma=0.5, tol=1e-6)
    b = svr_fit(Xd, yd, C=100.0, epsilon=0.05, gamma=0.5, tol=1e-6)
    Q = rng.normal(size=(20, 2))
    np.testing.assert_allclose(svr_predict(a, Q), svr_predict(b, Q), atol=1e-3)


def test_zero_coefficient_model_predicts_bias():
    m = SvrModel(np.empty((0, 2)), np.empty(0), 1.25, 1.0, 1.0, 0.1)
    assert svr_predict(m, np.ones((3, 2))).tolist() == [1.25] * 3


def test_prediction_continuous_in_gamma():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(20, 2))
    m = svr_fit(X, X[:, 0], C=1.0)
    Q = rng.normal(size=(10, 2))
    p0 = svr_predict(m, Q)
    for delta in (1e-3, 1e-4, 1e-5):
        moved = SvrModel(m.support_vectors, m.dual_coeffs, m.bias, m.gamma + delta, m.C,
                         m.epsilon)
        diff = np.max(np.abs(svr_predict(moved, Q) - p0))
        # |d/dgamma exp(-gamma r)| <= max r over the pairs
        r_max = np.max(((Q[:, None, :] - m.support_vectors[None]) ** 2).sum(-1))
        assert diff <= np.abs(m.dual_coeffs).sum() * r_max * delta * 1.01


def test_non_convergence_is_reported():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(30, 2))
    with pytest.warns(ConvergenceWarning, match="KKT violation"):
        m = svr_fit(X, X[:, 0] * 5, C=10.0, max_iter=2)
    assert not m.converged and m.iterations == 2


def test_input_validation():
    with pytest.raises(ValueError):
        svr_fit(np.ones((1, 2)), [1.0])
    with pytest.raises(ValueError):
        svr_fit(np.ones((3, 1)), [1.0, np.nan, 2.0])
    with pytest.raises(ValueError):
        svr_fit(np.ones((3, 1)), [1.0, 1.0, 2.0], C=0)
    m = svr_fit(np.arange(3.0)[:, None], [0.0, 1.0, 0.0])
    with pytest.raises(DimensionError):
        svr_predict(m, np.ones((1, 2)))


def test_uncached_kernel_rows_match_cached():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(20, 3))
    y = X @ [1.0, -1.0, 0.5]
    a = svr_fit(X, y, C=1.0)
    b = svr_fit(X, y, C=1.0, cache_bytes=0)
    np.testing.assert_allclose(svr_predict(a, X), svr_predict(b, X), atol=1e-12)


def test_json_round_trip():
    X = np.arange(6.0).reshape(3, 2)
    m = svr_fit(X, [0.0, 1.0, 3.0], C=2.0)
    back = SvrModel.from_dict(json.loads(json.dumps(m.to_dict())))
    np.testing.assert_array_equal(svr_predict(back, X), svr_predict(m, X))
