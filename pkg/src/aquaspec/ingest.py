"""Readers that turn cube files, ROI masks and reference logs into sample tables."""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .core import (AquaspecError, DimensionError, ParameterKind, SampleTable, Spectrum,
                   WavelengthGrid, validate_table, GRID_TOLERANCE_NM)

log = logging.getLogger(__name__)


class ParseError(AquaspecError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RangeError(AquaspecError):
    pass


@dataclass(frozen=True)
class CubeImage:
    width: int
    height: int
    grid: WavelengthGrid
    voxels: np.ndarray  # shape (count, height, width)

    def __post_init__(self):
        v = np.asarray(self.voxels, dtype=float)
        expected = self.width * self.height * self.grid.count
        if v.size != expected:
            raise DimensionError(f"cube has {v.size} voxels, expected {expected}")
        v = v.reshape(self.grid.count, self.height, self.width)
        if not np.all(np.isfinite(v)):
            raise ValueError("cube contains non-finite voxels")
        object.__setattr__(self, "voxels", v)


@dataclass(frozen=True)
class RoiMask:
    width: int
    height: int
    selected: np.ndarray  # bool, shape (height, width)

    def __post_init__(self):
        s = np.asarray(self.selected, dtype=bool)
        if s.shape != (self.height, self.width):
            raise DimensionError(f"mask shape {s.shape} != ({self.height}, {self.width})")
        if not s.any():
            raise ValueError("ROI mask selects no pixels")
        object.__setattr__(self, "selected", s)


@dataclass(frozen=True)
class ReferenceLog:
    timestamps: np.ndarray
    values: np.ndarray
    parameter: ParameterKind

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1 or t.size == 0:
            raise DimensionError("timestamps and values must be equal-length, non-empty vectors")
        if np.any(np.diff(t) <= 0):
            raise ValueError("reference timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "values", v)


def roi_mean_spectrum(cube: CubeImage, mask: RoiMask) -> Spectrum:
    if (mask.width, mask.height) != (cube.width, cube.height):
        raise DimensionError(
            f"mask {mask.width}x{mask.height} does not match cube {cube.width}x{cube.height}")
    pixels = cube.voxels[:, mask.selected]  # (count, n_selected)
    return Spectrum(cube.grid, pixels.mean(axis=1))


def interpolate_reference(log_: ReferenceLog, query_times) -> np.ndarray:
    """Piecewise-linear interpolation of the reference log. No extrapolation."""
    q = np.asarray(query_times, dtype=float)
    t0, t1 = log_.timestamps[0], log_.timestamps[-1]
    outside = (q < t0) | (q > t1) | ~np.isfinite(q)
    if outside.any():
        bad = q[outside][0]
        raise RangeError(f"query time {bad} outside reference range [{t0}, {t1}]")
    return np.interp(q, log_.timestamps, log_.values)


_WL_RE = re.compile(r"^wl_(.+)$")


def _grid_from_wavelengths(wls: Sequence[float], line: int) -> WavelengthGrid:
    if len(wls) == 1:
        return WavelengthGrid(wls[0], 1.0, 1)
    step = (wls[-1] - wls[0]) / (len(wls) - 1)
    if step <= 0:
        raise ParseError("wavelengths must be increasing", line)
    grid = WavelengthGrid(wls[0], step, len(wls))
    for i, w in enumerate(wls):
        if abs(grid.wavelength(i) - w) > 1e-6:
            raise ParseError(f"wavelength column {w} breaks the uniform grid", line)
    return grid


def parse_spectra_file(path) -> List[Tuple[float, Spectrum]]:
    """Read a spectra CSV (``time_s,wl_<w0>,wl_<w1>,...``)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise ParseError("no header", 1)
    header = [c.strip() for c in rows[0]]
    if header[0] != "time_s" or len(header) < 2:
        raise ParseError("header must start with time_s followed by wl_<nm> columns", 1)
    wls = []
    for name in header[1:]:
        m = _WL_RE.match(name)
        if not m:
            raise ParseError(f"bad column name {name!r}", 1)
        try:
            wls.append(float(m.group(1)))
        except ValueError:
            raise ParseError(f"bad wavelength in column {name!r}", 1) from None
    grid = _grid_from_wavelengths(wls, 1)

    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} values, got {len(row)}", lineno)
        try:
            values = [float(c) for c in row]
        except ValueError as exc:
            raise ParseError(f"non-numeric cell ({exc})", lineno) from None
        try:
            spectrum = Spectrum(grid, np.array(values[1:]))
        except (ValueError, AquaspecError) as exc:
            raise ParseError(str(exc), lineno) from None
        records.append((values[0], spectrum))
    return records


def parse_reference_file(path, parameter: ParameterKind) -> ReferenceLog:
    """Read a reference CSV with header ``time_s,value``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("no header", 1)
    if [c.strip() for c in rows[0]] != ["time_s", "value"]:
        raise ParseError("header must be 'time_s,value'", 1)
    times, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 values, got {len(row)}", lineno)
        try:
            t, v = float(row[0]), float(row[1])
        except ValueError as exc:
            raise ParseError(f"non-numeric cell ({exc})", lineno) from None
        if times and t <= times[-1]:
            raise ParseError("times must be strictly increasing", lineno)
        times.append(t)
        values.append(v)
    if not times:
        raise ParseError("no data rows", 2)
    return ReferenceLog(np.array(times), np.array(values), parameter)


def _same_grid(a: WavelengthGrid, b: WavelengthGrid) -> bool:
    return (a.count == b.count and abs(a.start_nm - b.start_nm) <= GRID_TOLERANCE_NM
            and abs(a.step_nm - b.step_nm) <= GRID_TOLERANCE_NM)


def build_sample_table(spectra: Sequence[Tuple[float, Spectrum]], log_: ReferenceLog,
                       drop_out_of_range: bool = False) -> SampleTable:
    """Pair each spectrum with the reference value interpolated at its time.

    With ``drop_out_of_range`` spectra outside the reference log are discarded
    (and counted in a warning) instead of raising.
    """
    if not spectra:
        raise DimensionError("no spectra given")
    grid = spectra[0][1].grid
    for _, s in spectra:
        if not _same_grid(s.grid, grid):
            raise DimensionError(f"mixed grids: {s.grid} vs {grid}")
    times = np.array([t for t, _ in spectra], dtype=float)
    if drop_out_of_range:
        keep = (times >= log_.timestamps[0]) & (times <= log_.timestamps[-1])
        dropped = int((~keep).sum())
        if dropped:
            log.warning("dropped %d spectra outside the reference time range", dropped)
        if not keep.any():
            raise RangeError("no spectra inside the reference time range")
        spectra = [s for s, k in zip(spectra, keep) if k]
        times = times[keep]
    target = interpolate_reference(log_, times)
    X = np.vstack([s.reflectance for _, s in spectra])
    return validate_table(SampleTable(X, target, log_.parameter, grid))


def read_cube(path) -> CubeImage:
    """Cube file: ASCII header line ``width height start_nm step_nm count`` then
    little-endian float32 voxels, channel-major, row-major pixels."""
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ParseError("missing header line", 1)
    parts = raw[:nl].decode("ascii").split()
    if len(parts) != 5:
        raise ParseError("header must be 'width height start_nm step_nm count'", 1)
    try:
        width, height, count = int(parts[0]), int(parts[1]), int(parts[4])
        start, step = float(parts[2]), float(parts[3])
    except ValueError:
        raise ParseError("non-numeric header field", 1) from None
    data = np.frombuffer(raw[nl + 1:], dtype="<f4")
    return CubeImage(width, height, WavelengthGrid(start, step, count), data.astype(float))


def write_cube(path, cube: CubeImage) -> None:
    g = cube.grid
    header = f"{cube.width} {cube.height} {g.start_nm!r} {g.step_nm!r} {g.count}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(cube.voxels.astype("<f4").tobytes())


def read_roi_mask(path) -> RoiMask:
    """ROI mask: whitespace-separated 0/1 text grid, one image row per line."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if any(t not in ("0", "1") for t in tokens):
                raise ParseError("mask cells must be 0 or 1", lineno)
            if rows and len(tokens) != len(rows[0]):
                raise ParseError("ragged mask row", lineno)
            rows.append([t == "1" for t in tokens])
    if not rows:
        raise ParseError("empty mask", 1)
    sel = np.array(rows, dtype=bool)
    return RoiMask(sel.shape[1], sel.shape[0], sel)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_spectra_file(path, records: Sequence[Tuple[float, Spectrum]]) -> None:
    grid = records[0][1].grid
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s"] + [f"wl_{_fmt_wl(x)}" for x in grid.wavelengths()])
        for t, s in records:
            w.writerow([_fmt(t)] + [_fmt(v) for v in s.reflectance])


def _fmt_wl(x: float) -> str:
    x = round(float(x), 9)
    return str(int(x)) if x == int(x) else repr(x)


def write_reference_file(path, log_: ReferenceLog) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "value"])
        for t, v in zip(log_.timestamps, log_.values):
            w.writerow([_fmt(t), _fmt(v)])
