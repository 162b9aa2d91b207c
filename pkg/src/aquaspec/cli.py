"""Command-line entry point: ``aquaspec {synth,run,histogram,inspect-pca}``.

Settings come from an INI file (section ``[aquaspec]``, see ``CONFIG_SCHEMA``);
command-line flags override config keys, which override defaults.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .core import AquaspecError, ParameterKind, SampleTable
from .harness import (ARMS, MODELS, SplitConfig, default_specs, run_framework, split_indices)
from .ingest import (ReferenceLog, build_sample_table, parse_reference_file,
                     parse_spectra_file, write_reference_file, write_spectra_file)
from .preprocess import pca_fit, select_bands
from .report import (atomic_write, histogram_counts, histogram_csv, report_csv, report_text,
                     svg_bars)
from .synthgen import GenConfig, generate_records

log = logging.getLogger("aquaspec")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2

# key -> (type, default); lists are comma-separated
CONFIG_SCHEMA = {
    "seed": (int, None),
    "out": (str, "out"),
    "n": (int, 1000),
    "noise_sd": (float, 0.02),
    "spectra": (str, None),
    "band_low": (float, 470.0),
    "band_high": (float, 910.0),
    "train_fraction": (float, 0.3),
    "n_bins": (int, 10),
    "folds": (int, 5),
    "models": (list, list(MODELS)),
    "arms": (list, list(ARMS)),
    "pca_k": (int, 8),
    "variance_threshold": (float, None),
    "hist_bins": (int, 10),
    "timings": (bool, False),
    **{f"reference_{k.key}": (str, None) for k in ParameterKind},
}


class ConfigError(AquaspecError):
    pass


@dataclass
class RunConfig:
    seed: int
    out: str = "out"
    n: int = 1000
    noise_sd: float = 0.02
    spectra: Optional[str] = None
    references: Dict[str, str] = field(default_factory=dict)
    band_low: float = 470.0
    band_high: float = 910.0
    train_fraction: float = 0.3
    n_bins: int = 10
    folds: int = 5
    models: List[str] = field(default_factory=lambda: list(MODELS))
    arms: List[str] = field(default_factory=lambda: list(ARMS))
    pca_k: Optional[int] = 8
    variance_threshold: Optional[float] = None
    hist_bins: int = 10
    timings: bool = False

    @property
    def split(self) -> SplitConfig:
        return SplitConfig(self.train_fraction, self.n_bins, self.seed)

    def to_dict(self) -> dict:
        return asdict(self)


def _convert(key: str, raw):
    kind, _ = CONFIG_SCHEMA[key]
    if raw is None:
        return None
    if kind is list:
        items = raw if isinstance(raw, list) else [s.strip() for s in str(raw).split(",")]
        return [s for s in items if s]
    if kind is bool:
        if isinstance(raw, bool):
            return raw
        if str(raw).lower() in ("1", "true", "yes", "on"):
            return True
        if str(raw).lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(raw, str) and raw.strip().lower() in ("", "none"):
        return None
    try:
        return kind(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected {kind.__name__}, got {raw!r}") from None


def load_config(path: Optional[str], overrides: dict) -> RunConfig:
    values = {k: default for k, (_, default) in CONFIG_SCHEMA.items()}
    base = Path(".")
    if path:
        if not Path(path).is_file():
            raise ConfigError(f"config file not found: {path}")
        cp = configparser.ConfigParser()
        try:
            cp.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        if not cp.has_section("aquaspec"):
            raise ConfigError(f"{path}: missing [aquaspec] section")
        base = Path(path).parent
        for key, raw in cp.items("aquaspec"):
            if key not in CONFIG_SCHEMA:
                raise ConfigError(f"{path}: unknown key {key!r}")
            values[key] = _convert(key, raw)
            if key in ("spectra", "out") or key.startswith("reference_"):
                if values[key] is not None:
                    values[key] = str((base / values[key]))
    for key, raw in overrides.items():
        if raw is not None:
            values[key] = _convert(key, raw)

    if values["seed"] is None:
        raise ConfigError("a seed is required (config key 'seed' or --seed)")
    for key, (_, default) in CONFIG_SCHEMA.items():
        if default is not None and values[key] is None:
            raise ConfigError(f"{key} must not be empty")
    refs = {k.key: values.pop(f"reference_{k.key}") for k in ParameterKind}
    cfg = RunConfig(references={k: v for k, v in refs.items() if v}, **values)
    _check(cfg)
    return cfg


def _check(cfg: RunConfig) -> None:
    if cfg.n < 1:
        raise ConfigError(f"n must be >= 1, got {cfg.n}")
    if cfg.noise_sd < 0:
        raise ConfigError("noise_sd must be >= 0")
    bad = [m for m in cfg.models if m not in MODELS]
    if bad:
        raise ConfigError(f"unknown models {bad}; choose from {list(MODELS)}")
    bad = [a for a in cfg.arms if a not in ARMS]
    if bad:
        raise ConfigError(f"unknown arms {bad}; choose from {list(ARMS)}")
    if not 0 < cfg.train_fraction < 1:
        raise ConfigError("train_fraction must be in (0, 1)")
    if cfg.pca_k is not None and cfg.pca_k < 1:
        raise ConfigError("pca_k must be >= 1")
    if cfg.pca_k is None and cfg.variance_threshold is None:
        raise ConfigError("set pca_k or variance_threshold")
    if cfg.spectra is not None:
        if not Path(cfg.spectra).is_file():
            raise ConfigError(f"spectra file not found: {cfg.spectra}")
        if not cfg.references:
            raise ConfigError("spectra given but no reference_<parameter> files")
        for key, p in cfg.references.items():
            if not Path(p).is_file():
                raise ConfigError(f"reference file for {key} not found: {p}")


def load_tables(cfg: RunConfig) -> List[SampleTable]:
    """Sample tables per parameter (file inputs or synthetic), band-selected."""
    if cfg.spectra is not None:
        records = parse_spectra_file(cfg.spectra)
        tables = []
        for kind in ParameterKind:
            if kind.key in cfg.references:
                ref = parse_reference_file(cfg.references[kind.key], kind)
                tables.append(build_sample_table(records, ref, drop_out_of_range=True))
    else:
        params, records = generate_records(cfg.n, GenConfig(noise_sd=cfg.noise_sd, seed=cfg.seed))
        X = np.vstack([s.reflectance for _, s in records])
        grid = records[0][1].grid
        tables = [SampleTable(X, np.array([p.value(k) for p in params]), k, grid)
                  for k in ParameterKind]
    return [select_bands(t, cfg.band_low, cfg.band_high) for t in tables]


def _threads() -> int:
    raw = os.environ.get("AQUASPEC_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"AQUASPEC_THREADS must be an integer, got {raw!r}") from None


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    return out


def _write_manifest(out: Path, cfg: RunConfig, command: str, extra: dict) -> None:
    manifest = {"command": command, "version": __version__, "config": cfg.to_dict(),
                "seed": cfg.seed, **extra}
    atomic_write(out / "manifest.json", json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def cmd_synth(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    gen = GenConfig(noise_sd=cfg.noise_sd, seed=cfg.seed)
    params, records = generate_records(cfg.n, gen)
    tmp = out / ".spectra.csv.tmp"
    write_spectra_file(tmp, records)
    os.replace(tmp, out / "spectra.csv")
    times = np.array([t for t, _ in records])
    for kind in ParameterKind:
        ref = ReferenceLog(times, np.array([p.value(kind) for p in params]), kind)
        tmp = out / f".reference_{kind.key}.csv.tmp"
        write_reference_file(tmp, ref)
        os.replace(tmp, out / f"reference_{kind.key}.csv")
    _write_manifest(out, cfg, "synth", {"files": ["spectra.csv"] + [
        f"reference_{k.key}.csv" for k in ParameterKind]})
    print(f"wrote {cfg.n} spectra and {len(ParameterKind)} reference files to {out}")
    return EXIT_OK


def cmd_run(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    tables = load_tables(cfg)
    specs = default_specs(cfg.models, cfg.arms, cfg.pca_k, cfg.seed, cfg.variance_threshold)
    report = run_framework(tables, specs, cfg.split, folds=cfg.folds, n_jobs=_threads())
    atomic_write(out / "report.csv", report_csv(report, include_timing=cfg.timings))
    atomic_write(out / "report.txt", report_text(report))
    for t in tables:
        atomic_write(out / f"r2_{t.parameter.key}.svg", svg_bars(report, t.parameter.key))
    _write_manifest(out, cfg, "run", {
        "split_sizes": {k: {"train": a, "test": b} for k, (a, b) in report.splits.items()},
        "pca_fitted_on": "training subset only",
        "defaults_note": "RF/XGB hyperparameters and SVM kernel are implementation defaults",
        "cells": [{"parameter": c.parameter, "model": c.model, "arm": c.arm,
                   "pca_k": c.pca_k, "pca_cumvar": c.pca_cumvar, "seconds": round(c.seconds, 3),
                   "error": c.error} for c in report.cells],
    })
    print(report_text(report))
    if report.cells and len(report.failed) == len(report.cells):
        log.error("all %d cells failed", len(report.cells))
        return EXIT_FAILED
    return EXIT_OK


def cmd_histogram(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    sizes = {}
    for t in load_tables(cfg):
        edges, tr, te = histogram_counts(t, cfg.split, cfg.hist_bins)
        atomic_write(out / f"histogram_{t.parameter.key}.csv", histogram_csv(edges, tr, te))
        sizes[t.parameter.key] = {"train": int(tr.sum()), "test": int(te.sum())}
        print(f"{t.parameter.key}: N_train={tr.sum()} N_test={te.sum()}")
    _write_manifest(out, cfg, "histogram", {"split_sizes": sizes})
    return EXIT_OK


def cmd_inspect_pca(cfg: RunConfig) -> int:
    tables = load_tables(cfg)
    t = tables[0]
    train, _ = split_indices(t.target, cfg.split)
    X = t.features[train]
    k_max = min(X.shape[0] - 1, X.shape[1], max(cfg.pca_k or 1, 20))
    model = pca_fit(X, k_max)
    ratios = model.variance_ratio()
    cum = np.cumsum(ratios)
    print(f"PCA on {X.shape[0]} training spectra x {X.shape[1]} bands "
          f"({cfg.band_low:g}-{cfg.band_high:g} nm)")
    print(f"{'k':>3} {'ratio':>12} {'cumulative':>12}")
    for i, (r, c) in enumerate(zip(ratios, cum), start=1):
        print(f"{i:>3} {r:>12.6f} {c:>12.6f}")
    reach = np.flatnonzero(cum >= 0.999)
    if reach.size:
        print(f"smallest k with cumulative ratio >= 0.999: {reach[0] + 1}")
    else:
        print(f"cumulative ratio stays below 0.999 within {k_max} components")
    if cfg.pca_k is not None and cfg.pca_k <= k_max:
        print(f"configured k={cfg.pca_k} covers {cum[cfg.pca_k - 1]:.6f}")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "run": cmd_run, "histogram": cmd_histogram,
            "inspect-pca": cmd_inspect_pca}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aquaspec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file with an [aquaspec] section")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--models", help="comma-separated subset of " + ",".join(MODELS))
        p.add_argument("--arms", help="comma-separated subset of raw,pca")
        p.add_argument("--pca-k", type=int, dest="pca_k")
        p.add_argument("--n", type=int, help="synthetic sample count")
        p.add_argument("--noise-sd", type=float, dest="noise_sd")
        p.add_argument("--timings", action="store_true", default=None,
                       help="fill the seconds column of report.csv")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: getattr(args, k) for k in
                 ("seed", "out", "models", "arms", "pca_k", "n", "noise_sd", "timings")}
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AquaspecError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
