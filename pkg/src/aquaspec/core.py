"""Shared domain types: spectral grids, spectra, target parameters, sample tables."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

GRID_TOLERANCE_NM = 1e-9


class AquaspecError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(AquaspecError):
    pass


class NonFiniteError(AquaspecError):
    def __init__(self, row: int, col: int):
        super().__init__(f"non-finite entry at ({row},{col})")
        self.row = row
        self.col = col


class OffGridError(AquaspecError):
    pass


class ParameterKind(enum.Enum):
    """The five water parameters, each with a fixed unit string."""

    CHLOROPHYLL_A = ("chlorophyll_a", "ug/L")
    GREEN_ALGAE = ("green_algae", "ug/L")
    DIATOMS = ("diatoms", "ug/L")
    CDOM = ("cdom", "ppb_QS")
    TURBIDITY = ("turbidity", "FTU")

    def __init__(self, key: str, unit: str):
        self.key = key
        self.unit = unit

    @classmethod
    def from_key(cls, key: str) -> "ParameterKind":
        for kind in cls:
            if kind.key == key:
                return kind
        raise ValueError(f"unknown parameter {key!r}")


@dataclass(frozen=True)
class WavelengthGrid:
    start_nm: float
    step_nm: float
    count: int

    def __post_init__(self):
        if not (self.step_nm > 0) or not math.isfinite(self.step_nm):
            raise ValueError(f"step_nm must be > 0, got {self.step_nm}")
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        if not math.isfinite(self.start_nm):
            raise ValueError("start_nm must be finite")

    def wavelength(self, i: int) -> float:
        return self.start_nm + i * self.step_nm

    @property
    def stop_nm(self) -> float:
        return self.wavelength(self.count - 1)

    def wavelengths(self) -> np.ndarray:
        return self.start_nm + np.arange(self.count) * self.step_nm

    def to_dict(self) -> dict:
        return {"start_nm": self.start_nm, "step_nm": self.step_nm, "count": self.count}

    @classmethod
    def from_dict(cls, d: dict) -> "WavelengthGrid":
        return cls(float(d["start_nm"]), float(d["step_nm"]), int(d["count"]))


def wavelength_index(grid: WavelengthGrid, wavelength_nm: float) -> int:
    """Index ``i`` with ``grid.wavelength(i) == wavelength_nm`` (within 1e-9 nm)."""
    pos = (wavelength_nm - grid.start_nm) / grid.step_nm
    i = int(round(pos))
    if i < 0 or i >= grid.count or abs(grid.wavelength(i) - wavelength_nm) > GRID_TOLERANCE_NM:
        raise OffGridError(f"{wavelength_nm} nm is not on grid {grid}")
    return i


@dataclass(frozen=True)
class Spectrum:
    grid: WavelengthGrid
    reflectance: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.reflectance, dtype=float)
        if r.ndim != 1 or r.shape[0] != self.grid.count:
            raise DimensionError(
                f"reflectance length {r.shape} does not match grid count {self.grid.count}")
        if not np.all(np.isfinite(r)):
            raise NonFiniteError(0, int(np.flatnonzero(~np.isfinite(r))[0]))
        if np.any(r < 0):
            raise ValueError(
                f"negative reflectance at channel {int(np.flatnonzero(r < 0)[0])}")
        r.setflags(write=False)
        object.__setattr__(self, "reflectance", r)


@dataclass(frozen=True)
class SampleTable:
    """Feature matrix (n x d) paired with one named target vector."""

    features: np.ndarray
    target: np.ndarray
    parameter: ParameterKind
    feature_grid: Optional[WavelengthGrid] = None

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        y = np.array(self.target, dtype=float)
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "target", y)

    @property
    def sample_count(self) -> int:
        return self.features.shape[0]

    @property
    def unit(self) -> str:
        return self.parameter.unit

    def subset(self, rows) -> "SampleTable":
        rows = np.asarray(rows)
        return SampleTable(self.features[rows], self.target[rows], self.parameter,
                           self.feature_grid)


@dataclass(frozen=True)
class Metrics:
    r_squared: float
    rmse: float

    def __post_init__(self):
        if self.rmse < 0:
            raise ValueError("rmse must be >= 0")
        if self.r_squared > 1:
            raise ValueError("r_squared must be <= 1")


def check_matrix(X: np.ndarray, name: str = "matrix") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {X.shape}")
    bad = ~np.isfinite(X)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise NonFiniteError(int(r), int(c))
    return X


def validate_table(table: SampleTable) -> SampleTable:
    X = table.features
    if X.ndim != 2:
        raise DimensionError(f"features must be 2-D, got shape {X.shape}")
    n, d = X.shape
    if n < 1 or d < 1:
        raise DimensionError(f"need n >= 1 and d >= 1, got {n}x{d}")
    if table.target.shape != (n,):
        raise DimensionError(f"target shape {table.target.shape} does not match {n} rows")
    if table.feature_grid is not None and table.feature_grid.count != d:
        raise DimensionError(
            f"grid count {table.feature_grid.count} does not match {d} feature columns")
    check_matrix(X, "features")
    bad = np.flatnonzero(~np.isfinite(table.target))
    if bad.size:
        raise NonFiniteError(int(bad[0]), d)
    return table
