"""Epsilon-insensitive support vector regression (RBF kernel) trained by SMO.

The dual is solved in the stacked form over ``a = [alpha, alpha*]`` (length 2n)::

    min 1/2 a'Qa + p'a   s.t.  s'a = 0,  0 <= a <= C
    s = [+1]*n + [-1]*n,  Q_ij = s_i s_j K(x_i, x_j),  p = [eps - y, eps + y]

Each iteration updates one pair picked by maximal violation and second-order
gain.  Inputs are expected to be scaled by the caller.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DimensionError, check_matrix

TAU = 1e-12
DEFAULT_CACHE_BYTES = 256 * 2 ** 20


class ConvergenceWarning(RuntimeWarning):
    pass


def rbf_kernel(x, z, gamma: float) -> float:
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.shape != z.shape:
        raise DimensionError(f"length mismatch: {x.shape} vs {z.shape}")
    diff = x - z
    return float(np.exp(-gamma * (diff @ diff)))


def rbf_matrix(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * A @ B.T
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


@dataclass(frozen=True)
class SvrModel:
    support_vectors: np.ndarray
    dual_coeffs: np.ndarray  # alpha - alpha*
    bias: float
    gamma: float
    C: float
    epsilon: float
    iterations: int = 0
    kkt_violation: float = 0.0
    converged: bool = True
    support_indices: Optional[np.ndarray] = None  # rows of the training set

    def predict(self, X) -> np.ndarray:
        return svr_predict(self, X)

    def to_dict(self) -> dict:
        return {"kind": "svr", "version": 1, "support_vectors": self.support_vectors.tolist(),
                "n_features": self.support_vectors.shape[1],
                "dual_coeffs": self.dual_coeffs.tolist(), "bias": self.bias,
                "gamma": self.gamma, "C": self.C, "epsilon": self.epsilon}

    @classmethod
    def from_dict(cls, d: dict) -> "SvrModel":
        sv = np.array(d["support_vectors"], dtype=float).reshape(-1, d["n_features"])
        return cls(sv, np.array(d["dual_coeffs"], dtype=float), d["bias"], d["gamma"], d["C"],
                   d["epsilon"])


class _KernelRows:
    """Kernel rows of the training set, from a full cache when it fits the budget."""

    def __init__(self, X: np.ndarray, gamma: float, cache_bytes: int):
        self.X = X
        self.gamma = gamma
        n = X.shape[0]
        self.full = rbf_matrix(X, X, gamma) if n * n * 8 <= cache_bytes else None
        self.sqnorm = (X * X).sum(axis=1)

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        sq = self.sqnorm + self.sqnorm[i] - 2.0 * self.X @ self.X[i]
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-self.gamma * sq)


def dual_objective(a: np.ndarray, K: np.ndarray, y: np.ndarray, epsilon: float) -> float:
    """Dual objective in maximisation form for the stacked variables ``a``."""
    n = y.shape[0]
    beta = a[:n] - a[n:]
    return float(-0.5 * beta @ K @ beta + y @ beta - epsilon * a.sum())


def svr_fit(X, y, C: float = 1.0, epsilon: float = 0.1, gamma: Optional[float] = None,
            tol: float = 1e-3, max_iter: Optional[int] = None, selection: str = "second_order",
            seed: int = 0, cache_bytes: int = DEFAULT_CACHE_BYTES,
            debug: bool = False) -> SvrModel:
    """Fit epsilon-SVR.  ``selection="random"`` pairs the maximal violator with a
    random violating partner (slower; used for cross-checks).  With ``debug`` the
    dual objective is checked to be non-decreasing at every step."""
    X = check_matrix(X)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if n < 2:
        raise ValueError("SVR needs at least 2 rows")
    if y.shape != (n,):
        raise DimensionError(f"{n} rows but {y.shape} targets")
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite target")
    if not C > 0 or epsilon < 0:
        raise ValueError("need C > 0 and epsilon >= 0")
    gamma = 1.0 / d if gamma is None else float(gamma)
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    if selection not in ("second_order", "random"):
        raise ValueError(f"unknown selection {selection!r}")
    max_iter = max(100_000, 100 * n) if max_iter is None else max_iter
    rng = np.random.default_rng(seed)

    kr = _KernelRows(X, gamma, cache_bytes)
    diagK = np.ones(n)  # RBF: K(x, x) = 1
    l = 2 * n
    s = np.concatenate([np.ones(n), -np.ones(n)])
    a = np.zeros(l)
    G = np.concatenate([epsilon - y, epsilon + y])
    QD = np.concatenate([diagK, diagK])
    mod = np.concatenate([np.arange(n), np.arange(n)])
    prev_obj = -np.inf
    K_dbg = rbf_matrix(X, X, gamma) if debug else None

    it = 0
    violation = np.inf
    while True:
        minus_sG = -s * G
        up = ((s > 0) & (a < C)) | ((s < 0) & (a > 0))
        low = ((s > 0) & (a > 0)) | ((s < 0) & (a < C))
        if not up.any() or not low.any():
            violation = 0.0
            break
        cand_up = np.where(up, minus_sG, -np.inf)
        i = int(np.argmax(cand_up))
        gmax = cand_up[i]
        gmin = float(np.min(np.where(low, minus_sG, np.inf)))
        violation = gmax - gmin
        if violation < tol or it >= max_iter:
            break

        Ki = kr.row(mod[i])
        Ki2 = np.concatenate([Ki, Ki])
        viol_low = low & (minus_sG < gmax)
        if selection == "second_order":
            b = gmax - minus_sG
            quad = QD[i] + QD - 2.0 * Ki2  # s_i s_t Q_it = K_it
            quad = np.where(quad > 0, quad, TAU)
            score = np.where(viol_low, -(b * b) / quad, np.inf)
            j = int(np.argmin(score))
        else:
            j = int(rng.choice(np.flatnonzero(viol_low)))
        Kj = kr.row(mod[j])
        Kij = Ki[mod[j]]

        old_ai, old_aj = a[i], a[j]
        Qij = s[i] * s[j] * Kij
        if s[i] != s[j]:
            quad = QD[i] + QD[j] + 2.0 * Qij
            quad = quad if quad > 0 else TAU
            delta = (-G[i] - G[j]) / quad
            diff = a[i] - a[j]
            a[i] += delta
            a[j] += delta
            if diff > 0:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = diff
            elif a[i] < 0:
                a[i] = 0.0
                a[j] = -diff
            if diff > 0:
                if a[i] > C:
                    a[i] = C
                    a[j] = C - diff
            elif a[j] > C:
                a[j] = C
                a[i] = C + diff
        else:
            quad = QD[i] + QD[j] - 2.0 * Qij
            quad = quad if quad > 0 else TAU
            delta = (G[i] - G[j]) / quad
            total = a[i] + a[j]
            a[i] -= delta
            a[j] += delta
            if total > C:
                if a[i] > C:
                    a[i] = C
                    a[j] = total - C
            elif a[j] < 0:
                a[j] = 0.0
                a[i] = total
            if total > C:
                if a[j] > C:
                    a[j] = C
                    a[i] = total - C
            elif a[i] < 0:
                a[i] = 0.0
                a[j] = total

        dai, daj = a[i] - old_ai, a[j] - old_aj
        Kj2 = np.concatenate([Kj, Kj])
        # Q[:, t] = s * s_t * K[:, t]
        G += s * (s[i] * dai * Ki2 + s[j] * daj * Kj2)
        it += 1
        if debug:
            obj = dual_objective(a, K_dbg, y, epsilon)
            assert obj >= prev_obj - 1e-10 * max(1.0, abs(prev_obj)), (obj, prev_obj)
            prev_obj = obj

    converged = violation < tol
    if not converged:
        warnings.warn(f"SMO stopped after {it} iterations with KKT violation {violation:.3g} "
                      f"(tol {tol})", ConvergenceWarning, stacklevel=2)

    # bias from free variables, else midpoint of the feasible interval
    sG = s * G
    at_upper = a >= C
    at_lower = a <= 0
    free = ~at_upper & ~at_lower
    if free.any():
        rho = float(sG[free].mean())
    else:
        ub_mask = (at_upper & (s < 0)) | (at_lower & (s > 0))
        lb_mask = (at_upper & (s > 0)) | (at_lower & (s < 0))
        ub = sG[ub_mask].min() if ub_mask.any() else np.inf
        lb = sG[lb_mask].max() if lb_mask.any() else -np.inf
        rho = float((ub + lb) / 2)

    beta = a[:n] - a[n:]
    sv = np.flatnonzero(beta != 0)
    return SvrModel(X[sv].copy(), beta[sv], -rho, gamma, float(C), float(epsilon), it,
                    float(violation), bool(converged), sv)


def svr_predict(model: SvrModel, X) -> np.ndarray:
    X = check_matrix(X)
    d = model.support_vectors.shape[1]
    if X.shape[1] != d:
        raise DimensionError(f"expected {d} columns, got {X.shape[1]}")
    if model.dual_coeffs.size == 0:
        return np.full(X.shape[0], model.bias)
    return rbf_matrix(X, model.support_vectors, model.gamma) @ model.dual_coeffs + model.bias
