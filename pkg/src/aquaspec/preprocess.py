"""Band selection, per-feature standardization and PCA."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .core import DimensionError, SampleTable, WavelengthGrid, check_matrix, wavelength_index

SCHEMA_VERSION = 1


def select_bands(table: SampleTable, low_nm: float, high_nm: float) -> SampleTable:
    """Keep the columns whose wavelength lies in ``[low_nm, high_nm]``."""
    grid = table.feature_grid
    if grid is None:
        raise ValueError("table has no wavelength grid")
    if not low_nm < high_nm:
        raise ValueError(f"low ({low_nm}) must be < high ({high_nm})")
    lo = wavelength_index(grid, low_nm)
    hi = wavelength_index(grid, high_nm)
    new_grid = WavelengthGrid(grid.wavelength(lo), grid.step_nm, hi - lo + 1)
    return SampleTable(table.features[:, lo:hi + 1], table.target, table.parameter, new_grid)


# columns whose stdev is below this fraction of the largest stdev count as constant
CONSTANT_RTOL = 1e-10


@dataclass(frozen=True)
class Standardizer:
    """Population-stdev scaler; constant columns map to 0."""

    means: np.ndarray
    stdevs: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = check_matrix(X)
        if X.shape[0] < 2:
            raise ValueError("standardizer needs at least 2 rows")
        sd = X.std(axis=0)
        sd[sd <= CONSTANT_RTOL * sd.max()] = 0.0
        return cls(X.mean(axis=0), sd)

    def apply(self, X) -> np.ndarray:
        X = check_matrix(X)
        if X.shape[1] != self.means.shape[0]:
            raise DimensionError(f"expected {self.means.shape[0]} columns, got {X.shape[1]}")
        scale = np.where(self.stdevs > 0, self.stdevs, 1.0)
        Z = (X - self.means) / scale
        Z[:, self.stdevs == 0] = 0.0
        return Z

    def to_dict(self) -> dict:
        return {"kind": "standardizer", "version": SCHEMA_VERSION,
                "means": self.means.tolist(), "stdevs": self.stdevs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        _check_version(d, "standardizer")
        return cls(np.array(d["means"], dtype=float), np.array(d["stdevs"], dtype=float))


def standardizer_fit(X) -> Standardizer:
    return Standardizer.fit(X)


def standardizer_apply(s: Standardizer, X) -> np.ndarray:
    return s.apply(X)


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, d), orthonormal rows
    explained_variance: np.ndarray
    total_variance: float

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def transform(self, X) -> np.ndarray:
        X = check_matrix(X)
        if X.shape[1] != self.mean.shape[0]:
            raise DimensionError(f"expected {self.mean.shape[0]} columns, got {X.shape[1]}")
        return (X - self.mean) @ self.components.T

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z) @ self.components + self.mean

    def variance_ratio(self) -> np.ndarray:
        if self.total_variance <= 0:
            return np.zeros(self.k)
        return self.explained_variance / self.total_variance

    def to_dict(self) -> dict:
        return {"kind": "pca", "version": SCHEMA_VERSION, "mean": self.mean.tolist(),
                "components": self.components.tolist(),
                "explained_variance": self.explained_variance.tolist(),
                "total_variance": self.total_variance}

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        _check_version(d, "pca")
        return cls(np.array(d["mean"], dtype=float),
                   np.array(d["components"], dtype=float).reshape(len(d["explained_variance"]), -1),
                   np.array(d["explained_variance"], dtype=float), float(d["total_variance"]))


def _check_version(d: dict, kind: str) -> None:
    if d.get("kind") != kind or d.get("version") != SCHEMA_VERSION:
        raise ValueError(f"not a version-{SCHEMA_VERSION} {kind} document")


def _fix_signs(components: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each row made positive; first index wins ties
    idx = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(components.shape[0]), idx])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def pca_fit(X, k: int) -> PcaModel:
    """Top-``k`` principal axes of the sample covariance (1/(n-1)), via SVD."""
    X = check_matrix(X)
    n, d = X.shape
    if n < 2:
        raise ValueError("PCA needs at least 2 rows")
    if not 1 <= k <= min(n - 1, d):
        raise ValueError(f"k={k} outside [1, {min(n - 1, d)}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    var = s ** 2 / (n - 1)
    total = float(np.sum(Xc * Xc) / (n - 1))
    explained = var[:k].copy()
    if explained[-1] < 1e-12:
        warnings.warn(f"data is rank-deficient: component {k} explains {explained[-1]:.3g}",
                      RuntimeWarning, stacklevel=2)
    return PcaModel(mean, _fix_signs(vt[:k].copy()), explained, total)


def pca_transform(model: PcaModel, X) -> np.ndarray:
    return model.transform(X)


def variance_ratio(model: PcaModel) -> np.ndarray:
    return model.variance_ratio()


def components_for_variance(X, threshold: float = 0.999) -> int:
    """Smallest k whose cumulative explained-variance ratio reaches ``threshold``."""
    X = check_matrix(X)
    n, d = X.shape
    model = pca_fit(X, min(n - 1, d))
    cum = np.cumsum(model.variance_ratio())
    hit = np.flatnonzero(cum >= threshold - 1e-12)
    return int(hit[0]) + 1 if hit.size else model.k


def save_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj.to_dict(), fh, indent=1)
