"""Multivariate adaptive regression splines.

A term is a tuple of hinge factors ``(feature, knot, sign)`` evaluating to
``max(0, sign * (x[feature] - knot))``; the empty tuple is the intercept.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .core import DimensionError, check_matrix

Hinge = Tuple[int, float, int]
Term = Tuple[Hinge, ...]

# Gram-matrix condition limit for accepting a new column
COND_LIMIT = 1e12
# relative reduction differences below this count as ties
_TIE_RTOL = 1e-12


def eval_term(term: Term, X: np.ndarray) -> np.ndarray:
    col = np.ones(X.shape[0])
    for f, knot, sign in term:
        col = col * np.maximum(0.0, sign * (X[:, f] - knot))
    return col


def design_matrix(terms: List[Term], X: np.ndarray) -> np.ndarray:
    return np.column_stack([eval_term(t, X) for t in terms])


@dataclass(frozen=True)
class MarsBasis:
    terms: List[Term]
    coefficients: np.ndarray
    sse: float
    sse_trace: List[float] = field(default_factory=list)


@dataclass(frozen=True)
class MarsModel:
    terms: List[Term]
    coefficients: np.ndarray
    gcv: float
    n_features: int
    gcv_trace: List[float] = field(default_factory=list)
    forward_gcv: float = float("nan")

    def predict(self, X) -> np.ndarray:
        return mars_predict(self, X)

    def to_dict(self) -> dict:
        return {"kind": "mars", "version": 1, "n_features": self.n_features, "gcv": self.gcv,
                "terms": [[list(h) for h in t] for t in self.terms],
                "coefficients": self.coefficients.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MarsModel":
        terms = [tuple((int(f), float(k), int(s)) for f, k, s in t) for t in d["terms"]]
        return cls(terms, np.array(d["coefficients"], dtype=float), d["gcv"], d["n_features"])


def _lstsq(B: np.ndarray, y: np.ndarray):
    coef, *_ = np.linalg.lstsq(B, y, rcond=None)
    r = y - B @ coef
    return coef, float(r @ r)


def _orthonormal(B: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(B)
    return q


def _score_feature(Q, r, parent_col, x, knots):
    """Residual-SSE reductions for adding hinge pair / single hinges at each knot.

    Returns (pair_red, plus_red, minus_red, plus_ok, minus_ok), each over knots.
    """
    Hp = parent_col[:, None] * np.maximum(0.0, x[:, None] - knots[None, :])
    Hm = parent_col[:, None] * np.maximum(0.0, knots[None, :] - x[:, None])
    Ap = Q.T @ Hp
    Am = Q.T @ Hm
    hp2 = (Hp * Hp).sum(axis=0)
    hm2 = (Hm * Hm).sum(axis=0)
    uu = hp2 - (Ap * Ap).sum(axis=0)
    vv = hm2 - (Am * Am).sum(axis=0)
    uv = -(Ap * Am).sum(axis=0)  # hinge pairs have disjoint support
    ur = r @ Hp
    vr = r @ Hm
    lim = 1.0 / COND_LIMIT
    plus_ok = uu > lim * hp2
    minus_ok = vv > lim * hm2
    with np.errstate(divide="ignore", invalid="ignore"):
        plus_red = np.where(plus_ok, ur * ur / uu, -np.inf)
        minus_red = np.where(minus_ok, vr * vr / vv, -np.inf)
        det = uu * vv - uv * uv
        both = plus_ok & minus_ok & (det > lim * uu * vv)
        pair_red = np.where(both, (vv * ur * ur - 2 * uv * ur * vr + uu * vr * vr) / det, -np.inf)
    return pair_red, plus_red, minus_red, plus_ok, minus_ok


def mars_forward(X, y, max_terms: int = 21, degree: int = 1) -> MarsBasis:
    """Greedy forward selection of hinge pairs (knots at observed values)."""
    X = check_matrix(X)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if n < 4:
        raise ValueError("MARS needs at least 4 rows")
    if y.shape != (n,):
        raise DimensionError(f"{n} rows but {y.shape} targets")
    if max_terms < 1 or degree < 1:
        raise ValueError("max_terms and degree must be >= 1")

    terms: List[Term] = [()]
    cols = [np.ones(n)]
    B = np.ones((n, 1))
    coef, sse = _lstsq(B, y)
    initial = sse
    trace = [sse]
    rejected = set()

    while len(terms) < max_terms and initial > 0:
        Q = _orthonormal(B)
        r = y - Q @ (Q.T @ y)
        slots = max_terms - len(terms)
        reds, keys = [], []
        for p, parent in enumerate(terms):
            if len(parent) >= degree:
                continue
            used = {h[0] for h in parent}
            pcol = cols[p]
            live = pcol > 0
            for f in range(d):
                if f in used:
                    continue
                knots = np.unique(X[live, f])
                pair, plus, minus, _, _ = _score_feature(Q, r, pcol, X[:, f], knots)
                if slots < 2:
                    pair = np.full_like(pair, -np.inf)
                for kind, red in enumerate((pair, plus, minus)):
                    reds.append(red)
                    keys.append(np.column_stack([np.full(knots.size, p), np.full(knots.size, f),
                                                 knots, np.full(knots.size, kind)]))
        if not reds:
            break
        red = np.concatenate(reds)
        key = np.concatenate(keys)
        best_red = red.max()
        if not np.isfinite(best_red) or best_red < 1e-10 * initial:
            break
        # near-equal reductions are ties, resolved by (parent, feature, knot, kind)
        tie_floor = best_red - _TIE_RTOL * max(initial, best_red)
        pool = np.flatnonzero(red >= best_red - 1e-6 * initial)
        tied = red[pool] >= tie_floor
        order = np.lexsort((key[pool, 3], key[pool, 2], key[pool, 1], key[pool, 0],
                            np.where(tied, 0.0, -red[pool]), ~tied))
        cands = []
        for c in pool[order][:64]:
            p, f, knot, kind = int(key[c, 0]), int(key[c, 1]), float(key[c, 2]), int(key[c, 3])
            parent = terms[p]
            if kind == 0:
                new = (parent + ((f, knot, 1),), parent + ((f, knot, -1),))
            else:
                new = (parent + ((f, knot, 1 if kind == 1 else -1),),)
            if any(t in terms for t in new) or new in rejected:
                continue
            cands.append(new)
        accepted = False
        for new in cands:
            newB = np.column_stack([B] + [eval_term(t, X) for t in new])
            new_coef, new_sse = _lstsq(newB, y)
            if new_sse < sse and np.linalg.cond(newB.T @ newB) <= COND_LIMIT:
                accepted = True
                break
            rejected.add(new)
        if not accepted or sse - new_sse < 1e-10 * initial:
            break
        terms.extend(new)
        cols.extend(eval_term(t, X) for t in new)
        B, coef, sse = newB, new_coef, new_sse
        trace.append(sse)
    return MarsBasis(terms, coef, sse, trace)


def n_knots(terms: List[Term]) -> int:
    return len({(f, k) for t in terms for f, k, _ in t})


def gcv(sse: float, n: int, terms: List[Term], penalty: float = 3.0) -> float:
    c = len(terms) + penalty * n_knots(terms)
    if c >= n:
        return float("inf")
    return (sse / n) / (1.0 - c / n) ** 2


def mars_prune(basis: MarsBasis, X, y, penalty: float = 3.0) -> MarsModel:
    """Backward elimination by GCV; keeps the best subset visited."""
    X = check_matrix(X)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    terms = list(basis.terms)
    full = design_matrix(terms, X)
    coef, sse = _lstsq(full, y)
    best = (gcv(sse, n, terms, penalty), terms, coef)
    forward_gcv = best[0]
    trace = [best[0]]
    active = list(range(len(terms)))
    while len(active) > 1:
        step = None
        for pos in range(1, len(active)):  # position 0 is the intercept
            keep = active[:pos] + active[pos + 1:]
            sub_terms = [terms[i] for i in keep]
            c, s = _lstsq(full[:, keep], y)
            g = gcv(s, n, sub_terms, penalty)
            if step is None or g < step[0]:
                step = (g, keep, c)
        g, active, c = step
        trace.append(g)
        if g < best[0]:
            best = (g, [terms[i] for i in active], c)
    return MarsModel(best[1], best[2], best[0], X.shape[1], trace, forward_gcv)


def mars_fit(X, y, max_terms: int = 21, degree: int = 1, penalty: float = 3.0) -> MarsModel:
    basis = mars_forward(X, y, max_terms=max_terms, degree=degree)
    return mars_prune(basis, X, y, penalty=penalty)


def mars_predict(model: MarsModel, X) -> np.ndarray:
    X = check_matrix(X)
    if X.shape[1] != model.n_features:
        raise DimensionError(f"expected {model.n_features} columns, got {X.shape[1]}")
    return design_matrix(model.terms, X) @ model.coefficients
