"""Brute-force k-nearest-neighbour regression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DimensionError, check_matrix


@dataclass(frozen=True)
class KnnModel:
    train_features: np.ndarray
    train_targets: np.ndarray
    k: int

    def predict(self, X) -> np.ndarray:
        return knn_predict(self, X)

    def to_dict(self) -> dict:
        return {"kind": "knn", "version": 1, "k": self.k,
                "train_features": self.train_features.tolist(),
                "train_targets": self.train_targets.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "KnnModel":
        return cls(np.array(d["train_features"], dtype=float),
                   np.array(d["train_targets"], dtype=float), int(d["k"]))


def knn_fit(X, y, k: int) -> KnnModel:
    X = check_matrix(X)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    if y.shape != (n,):
        raise DimensionError(f"{n} rows but {y.shape} targets")
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    return KnnModel(X.copy(), y.copy(), int(k))


def knn_predict(model: KnnModel, X, block: int = 64) -> np.ndarray:
    """Unweighted mean of the k nearest targets; ties go to the lower training index."""
    X = check_matrix(X)
    train = model.train_features
    if X.shape[1] != train.shape[1]:
        raise DimensionError(f"expected {train.shape[1]} columns, got {X.shape[1]}")
    out = np.empty(X.shape[0])
    for start in range(0, X.shape[0], block):
        q = X[start:start + block]
        d2 = ((q[:, None, :] - train[None, :, :]) ** 2).sum(axis=2)
        # stable sort keeps lower training index first among equal distances
        order = np.argsort(d2, axis=1, kind="stable")[:, :model.k]
        out[start:start + block] = model.train_targets[order].mean(axis=1)
    return out
