"""Deterministic bio-optical forward model producing labelled reflectance spectra.

reflectance(l) = clip[0, 1]( B(l) + s_t*turbidity
                             - a_chl(l)*chl_total + peaks(l)*chl_total
                             - lobe_ga(l)*green_algae - lobe_dia(l)*diatoms
                             - a_cdom(l)*cdom + noise(l) )

with chl_total = chlorophyll_a + w_ga*green_algae + w_dia*diatoms and
noise(l) ~ N(0, (noise_sd * B(l))^2).  All constants live in ``CONSTANTS``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Dict, Tuple

import numpy as np

from .core import ParameterKind, SampleTable, Spectrum, WavelengthGrid

CONSTANTS = {
    # clear-water baseline: base + amp * exp(-((l - center)/width)^2)
    "baseline_base": 0.02,
    "baseline_amp": 0.03,
    "baseline_center_nm": 560.0,
    "baseline_width_nm": 100.0,
    # flat backscatter per FTU
    "turbidity_scatter": 0.01,
    # chlorophyll absorption lobe (per ug/L)
    "chl_abs_amp": 1.0e-4,
    "chl_abs_center_nm": 670.0,
    "chl_abs_width_nm": 12.0,
    # chlorophyll-driven reflectance peaks (per ug/L)
    "chl_green_peak_amp": 0.5e-4,
    "chl_green_peak_center_nm": 550.0,
    "chl_green_peak_width_nm": 25.0,
    "chl_red_peak_amp": 1.2e-4,
    "chl_red_peak_center_nm": 705.0,
    "chl_red_peak_width_nm": 15.0,
    # pigment weights of the algal groups in chl_total
    "green_algae_chl_weight": 0.5,
    "diatoms_chl_weight": 0.5,
    # group-specific secondary absorption lobes (per ug/L)
    "green_algae_lobe_amp": 0.8e-4,
    "green_algae_lobe_center_nm": 650.0,
    "green_algae_lobe_width_nm": 10.0,
    "diatoms_lobe_amp": 0.8e-4,
    "diatoms_lobe_center_nm": 545.0,
    "diatoms_lobe_width_nm": 10.0,
    # CDOM: amp * exp(-slope * (l - 450)) per ppb_QS
    "cdom_abs_amp": 1.5e-3,
    "cdom_slope_per_nm": 0.015,
    "cdom_ref_nm": 450.0,
}

# per-parameter uniform sampling ranges
DEFAULT_RANGES: Dict[ParameterKind, Tuple[float, float]] = {
    ParameterKind.CHLOROPHYLL_A: (2.0, 120.0),
    ParameterKind.GREEN_ALGAE: (1.0, 75.0),
    ParameterKind.DIATOMS: (1.0, 65.0),
    ParameterKind.CDOM: (5.0, 13.0),
    ParameterKind.TURBIDITY: (0.5, 2.5),
}

SAMPLE_INTERVAL_S = 10.0


@dataclass(frozen=True)
class SceneParams:
    chlorophyll_a: float = 0.0
    green_algae: float = 0.0
    diatoms: float = 0.0
    cdom: float = 0.0
    turbidity: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{f.name} must be finite and >= 0, got {v}")

    def value(self, kind: ParameterKind) -> float:
        return getattr(self, kind.key)


@dataclass(frozen=True)
class GenConfig:
    grid: WavelengthGrid = WavelengthGrid(450.0, 4.0, 125)
    noise_sd: float = 0.02
    seed: int = 0
    ranges: Dict[ParameterKind, Tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_RANGES))

    def __post_init__(self):
        if not self.noise_sd >= 0:
            raise ValueError("noise_sd must be >= 0")
        for kind, (lo, hi) in self.ranges.items():
            if not 0 <= lo <= hi:
                raise ValueError(f"bad range for {kind.key}: {(lo, hi)}")


def _lobe(wl, center, width):
    return np.exp(-((wl - center) / width) ** 2)


def baseline(wl: np.ndarray) -> np.ndarray:
    c = CONSTANTS
    return c["baseline_base"] + c["baseline_amp"] * _lobe(
        wl, c["baseline_center_nm"], c["baseline_width_nm"])


def noiseless_reflectance(p: SceneParams, wl: np.ndarray) -> np.ndarray:
    """Forward model before noise and clipping."""
    c = CONSTANTS
    chl_total = (p.chlorophyll_a + c["green_algae_chl_weight"] * p.green_algae
                 + c["diatoms_chl_weight"] * p.diatoms)
    chl_shape = (-c["chl_abs_amp"] * _lobe(wl, c["chl_abs_center_nm"], c["chl_abs_width_nm"])
                 + c["chl_green_peak_amp"] * _lobe(wl, c["chl_green_peak_center_nm"],
                                                   c["chl_green_peak_width_nm"])
                 + c["chl_red_peak_amp"] * _lobe(wl, c["chl_red_peak_center_nm"],
                                                 c["chl_red_peak_width_nm"]))
    a_cdom = c["cdom_abs_amp"] * np.exp(-c["cdom_slope_per_nm"] * (wl - c["cdom_ref_nm"]))
    return (baseline(wl)
            + c["turbidity_scatter"] * p.turbidity
            + chl_shape * chl_total
            - c["green_algae_lobe_amp"] * _lobe(wl, c["green_algae_lobe_center_nm"],
                                                c["green_algae_lobe_width_nm"]) * p.green_algae
            - c["diatoms_lobe_amp"] * _lobe(wl, c["diatoms_lobe_center_nm"],
                                            c["diatoms_lobe_width_nm"]) * p.diatoms
            - a_cdom * p.cdom)


def forward_spectrum(p: SceneParams, config: GenConfig = GenConfig(),
                     rng: np.random.Generator | None = None) -> Spectrum:
    """One spectrum; noise is drawn from ``rng`` (default: stream of ``config.seed``)."""
    wl = config.grid.wavelengths()
    r = noiseless_reflectance(p, wl)
    if config.noise_sd > 0:
        rng = np.random.default_rng(config.seed) if rng is None else rng
        r = r + rng.normal(0.0, 1.0, wl.shape) * (config.noise_sd * baseline(wl))
    return Spectrum(config.grid, np.clip(r, 0.0, 1.0))


def sample_params(n: int, config: GenConfig) -> list:
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
    kinds = list(ParameterKind)
    lows = np.array([config.ranges[k][0] for k in kinds])
    highs = np.array([config.ranges[k][1] for k in kinds])
    draws = rng.uniform(lows, highs, size=(n, len(kinds)))
    return [SceneParams(**{k.key: float(v) for k, v in zip(kinds, row)}) for row in draws]


def generate_records(n: int, config: GenConfig = GenConfig()):
    """``n`` scenes with their timestamped spectra (one noise substream per sample)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    params = sample_params(n, config)
    noise_root = np.random.SeedSequence([config.seed, 1])
    streams = noise_root.spawn(n)
    records = []
    for i, (p, ss) in enumerate(zip(params, streams)):
        spectrum = forward_spectrum(p, config, np.random.default_rng(ss))
        records.append((i * SAMPLE_INTERVAL_S, spectrum))
    return params, records


def generate_dataset(n: int, config: GenConfig = GenConfig()) -> Dict[ParameterKind, SampleTable]:
    params, records = generate_records(n, config)
    X = np.vstack([s.reflectance for _, s in records])
    return {kind: SampleTable(X, np.array([p.value(kind) for p in params]), kind, config.grid)
            for kind in ParameterKind}
