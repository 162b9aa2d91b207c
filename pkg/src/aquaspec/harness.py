"""Experimental protocol: stratified split, per-model scaling, optional PCA arm,
cross-validated hyperparameters, test metrics."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import AquaspecError, Metrics, SampleTable, validate_table
from .kernel import svr_fit
from .mars import mars_fit
from .neighbors import knn_fit
from .preprocess import PcaModel, Standardizer, components_for_variance, pca_fit
from .trees import rf_fit, xgb_fit

log = logging.getLogger(__name__)

MODELS = ("knn", "rf", "svm", "mars", "xgb")
ARMS = ("raw", "pca")
SCALED_MODELS = frozenset({"knn", "svm", "mars"})
DEFAULT_PCA_K = 8


# ---------------------------------------------------------------- metrics

def _check_pair(y, yhat):
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.ndim != 1 or y.shape != yhat.shape or y.size == 0:
        raise ValueError(f"need equal non-empty vectors, got {y.shape} and {yhat.shape}")
    return y, yhat


def r_squared(y, yhat) -> float:
    """Coefficient of determination about the mean of ``y``."""
    y, yhat = _check_pair(y, yhat)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        raise ValueError("R^2 undefined for constant targets")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / ss_tot


def rmse(y, yhat) -> float:
    y, yhat = _check_pair(y, yhat)
    return math.sqrt(float(np.mean((y - yhat) ** 2)))


def squared_correlation(y, yhat) -> float:
    y, yhat = _check_pair(y, yhat)
    if np.std(yhat) == 0 or np.std(y) == 0:
        return float("nan")
    return float(np.corrcoef(y, yhat)[0, 1] ** 2)


# ---------------------------------------------------------------- split

@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.3
    n_bins: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must be in (0, 1)")
        if self.n_bins < 1:
            raise ValueError("n_bins must be >= 1")


def split_indices(target, config: SplitConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Stratified random split; returns sorted (train, test) row indices.

    Targets are ranked into equal-frequency bins.  The overall train count is
    ``round(train_fraction * n)``; it is spread over the bins by largest
    remainder (remainder ties broken at random), and each bin's train rows are
    a seeded random subset.
    """
    y = np.asarray(target, dtype=float)
    n = y.size
    if n < config.n_bins:
        raise ValueError(f"need at least n_bins={config.n_bins} rows, got {n}")
    rng = np.random.default_rng(config.seed)
    ranks = np.empty(n, dtype=np.intp)
    ranks[np.argsort(y, kind="stable")] = np.arange(n)
    bins = ranks * config.n_bins // n
    sizes = np.bincount(bins, minlength=config.n_bins)
    quota = config.train_fraction * sizes
    counts = np.floor(quota).astype(int)
    short = int(round(config.train_fraction * n)) - counts.sum()
    if short > 0:
        frac = quota - counts
        jitter = rng.permutation(config.n_bins)
        order = np.lexsort((jitter, -frac))
        counts[order[:short]] += 1
    train = []
    for b in range(config.n_bins):
        members = np.flatnonzero(bins == b)
        train.append(rng.permutation(members)[:counts[b]])
    train = np.sort(np.concatenate(train))
    mask = np.zeros(n, dtype=bool)
    mask[train] = True
    return train, np.flatnonzero(~mask)


def split_stratified(table: SampleTable, config: SplitConfig) -> Tuple[SampleTable, SampleTable]:
    train, test = split_indices(table.target, config)
    return table.subset(train), table.subset(test)


# ---------------------------------------------------------------- models

def _svm(X, y, params, seed):
    # targets standardized internally so epsilon and C act on a unit scale
    mu, sd = float(y.mean()), float(y.std())
    sd = sd if sd > 0 else 1.0
    gamma = params.get("gamma_scale", 1.0) / X.shape[1]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        model = svr_fit(X, (y - mu) / sd, C=params.get("C", 1.0),
                        epsilon=params.get("epsilon", 0.1), gamma=gamma)
    return _Rescaled(model, mu, sd)


@dataclass(frozen=True)
class _Rescaled:
    model: object
    mu: float
    sd: float

    def predict(self, X):
        return self.model.predict(X) * self.sd + self.mu


MODEL_FITTERS: Dict[str, Callable] = {
    "knn": lambda X, y, p, seed: knn_fit(X, y, k=min(p.get("k", 5), X.shape[0])),
    "rf": lambda X, y, p, seed: rf_fit(X, y, n_trees=p.get("n_trees", 500), mtry=p.get("mtry"),
                                       min_leaf=p.get("min_leaf", 5), seed=seed),
    "svm": _svm,
    "mars": lambda X, y, p, seed: mars_fit(X, y, max_terms=p.get("max_terms", 21),
                                           degree=p.get("degree", 1),
                                           penalty=p.get("penalty", 3.0)),
    "xgb": lambda X, y, p, seed: xgb_fit(X, y, n_rounds=p.get("n_rounds", 100),
                                         eta=p.get("eta", 0.3), lam=p.get("lambda", 1.0),
                                         max_depth=p.get("max_depth", 3),
                                         min_leaf=p.get("min_leaf", 1)),
}

DEFAULT_GRIDS: Dict[str, List[dict]] = {
    "knn": [{"k": k} for k in (3, 5, 7, 9)],
    "rf": [{"n_trees": 500, "min_leaf": 5}],
    "svm": [{"C": c, "gamma_scale": g, "epsilon": 0.1}
            for c in (0.1, 1.0, 10.0) for g in (0.1, 1.0, 10.0)],
    "mars": [{"max_terms": m, "degree": 1} for m in (11, 21)],
    "xgb": [{"n_rounds": 100, "eta": 0.3, "lambda": 1.0, "max_depth": 3}],
}


@dataclass(frozen=True)
class RunSpec:
    model: str
    arm: str = "pca"
    pca_k: Optional[int] = DEFAULT_PCA_K
    variance_threshold: Optional[float] = None  # used when pca_k is None
    grid: Optional[Tuple[dict, ...]] = None
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODEL_FITTERS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.arm not in ARMS:
            raise ValueError(f"unknown arm {self.arm!r}")
        if self.arm == "pca" and self.pca_k is None and self.variance_threshold is None:
            raise ValueError("pca arm needs pca_k or variance_threshold")
        if self.grid is not None and len(self.grid) == 0:
            raise ValueError("empty hyperparameter grid")

    @property
    def scaled(self) -> bool:
        return self.model in SCALED_MODELS

    @property
    def hyper_grid(self) -> Tuple[dict, ...]:
        return tuple(self.grid) if self.grid is not None else tuple(DEFAULT_GRIDS[self.model])


@dataclass(frozen=True)
class FittedPipeline:
    pca: Optional[PcaModel]
    scaler: Optional[Standardizer]
    model: object

    def transform(self, X) -> np.ndarray:
        Z = np.asarray(X, dtype=float)
        if self.pca is not None:
            Z = self.pca.transform(Z)
        if self.scaler is not None:
            Z = self.scaler.apply(Z)
        return Z

    def predict(self, X) -> np.ndarray:
        return self.model.predict(self.transform(X))

    def preprocess_checksum(self) -> str:
        return preprocess_checksum(self.pca, self.scaler)


def preprocess_checksum(pca: Optional[PcaModel], scaler: Optional[Standardizer]) -> str:
    h = hashlib.sha256()
    for arr in ([pca.mean, pca.components, pca.explained_variance] if pca else []) + (
            [scaler.means, scaler.stdevs] if scaler else []):
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()


def _pca_k(spec: RunSpec, X: np.ndarray) -> int:
    if spec.pca_k is not None:
        return spec.pca_k
    return components_for_variance(X, spec.variance_threshold)


def fit_pipeline(X, y, spec: RunSpec, params: dict) -> FittedPipeline:
    """Fit preprocessing and model on the given rows only."""
    X = np.asarray(X, dtype=float)
    pca = None
    Z = X
    if spec.arm == "pca":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            pca = pca_fit(X, _pca_k(spec, X))
        Z = pca.transform(X)
    scaler = None
    if spec.scaled:
        scaler = Standardizer.fit(Z)
        Z = scaler.apply(Z)
    model = MODEL_FITTERS[spec.model](Z, np.asarray(y, dtype=float), params, spec.seed)
    return FittedPipeline(pca, scaler, model)


def fold_indices(n: int, folds: int, seed: int) -> List[np.ndarray]:
    perm = np.random.default_rng(np.random.SeedSequence([seed, 7])).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, folds)]


def cv_select(train: SampleTable, spec: RunSpec, folds: int = 5) -> Tuple[dict, List[float]]:
    """Grid search minimising mean fold RMSE; ties go to the first grid entry.

    Returns the chosen parameters and the mean RMSE per grid entry (empty for
    a singleton grid, which is returned without evaluation).
    """
    grid = spec.hyper_grid
    if len(grid) == 1:
        return dict(grid[0]), []
    n = train.sample_count
    if n < folds:
        raise ValueError(f"need at least {folds} training rows for {folds}-fold CV")
    parts = fold_indices(n, folds, spec.seed)
    scores = []
    for params in grid:
        errs = []
        for k in range(folds):
            val = parts[k]
            fit_rows = np.concatenate([parts[j] for j in range(folds) if j != k])
            pipe = fit_pipeline(train.features[fit_rows], train.target[fit_rows], spec, params)
            errs.append(rmse(train.target[val], pipe.predict(train.features[val])))
        scores.append(float(np.mean(errs)))
    best = int(np.argmin(scores))
    return dict(grid[best]), scores


# ---------------------------------------------------------------- framework

@dataclass
class CellResult:
    parameter: str
    unit: str
    model: str
    arm: str
    metrics: Optional[Metrics] = None
    r2_corr: float = float("nan")
    hyperparams: dict = field(default_factory=dict)
    pca_k: Optional[int] = None
    pca_cumvar: Optional[float] = None
    seconds: float = 0.0
    n_train: int = 0
    n_test: int = 0
    preprocess_checksum: str = ""
    error: Optional[str] = None


@dataclass
class EvalReport:
    cells: List[CellResult]
    splits: Dict[str, Tuple[int, int]]
    split_config: SplitConfig

    def cell(self, parameter: str, model: str, arm: str) -> CellResult:
        for c in self.cells:
            if (c.parameter, c.model, c.arm) == (parameter, model, arm):
                return c
        raise KeyError((parameter, model, arm))

    @property
    def failed(self) -> List[CellResult]:
        return [c for c in self.cells if c.error is not None]


def run_cell(train: SampleTable, test: SampleTable, spec: RunSpec, folds: int = 5) -> CellResult:
    cell = CellResult(train.parameter.key, train.unit, spec.model, spec.arm,
                      n_train=train.sample_count, n_test=test.sample_count)
    t0 = time.perf_counter()
    try:
        params, _ = cv_select(train, spec, folds)
        pipe = fit_pipeline(train.features, train.target, spec, params)
        pred = pipe.predict(test.features)
        cell.metrics = Metrics(r_squared(test.target, pred), rmse(test.target, pred))
        cell.r2_corr = squared_correlation(test.target, pred)
        cell.hyperparams = params
        if pipe.pca is not None:
            cell.pca_k = pipe.pca.k
            cell.pca_cumvar = float(np.sum(pipe.pca.variance_ratio()))
        cell.preprocess_checksum = pipe.preprocess_checksum()
    except (AquaspecError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        log.error("cell %s/%s/%s failed: %s", cell.parameter, spec.model, spec.arm, exc)
        cell.error = f"{type(exc).__name__}: {exc}"
    cell.seconds = time.perf_counter() - t0
    return cell


def run_framework(tables: Sequence[SampleTable], specs: Sequence[RunSpec],
                  split: SplitConfig = SplitConfig(), folds: int = 5,
                  n_jobs: int = 1) -> EvalReport:
    """Evaluate every spec on every table with one shared split per table."""
    jobs, splits = [], {}
    for table in tables:
        validate_table(table)
        train, test = split_stratified(table, split)
        splits[table.parameter.key] = (train.sample_count, test.sample_count)
        jobs.extend((train, test, spec) for spec in specs)
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            cells = list(pool.map(lambda j: run_cell(*j, folds=folds), jobs))
    else:
        cells = [run_cell(*j, folds=folds) for j in jobs]
    return EvalReport(cells, splits, split)


def default_specs(models: Sequence[str] = MODELS, arms: Sequence[str] = ARMS,
                  pca_k: Optional[int] = DEFAULT_PCA_K, seed: int = 0,
                  variance_threshold: Optional[float] = None) -> List[RunSpec]:
    return [RunSpec(m, a, pca_k=pca_k, variance_threshold=variance_threshold, seed=seed)
            for m in models for a in arms]


def hyperparams_json(params: dict) -> str:
    return json.dumps(params, sort_keys=True, separators=(",", ":"))
