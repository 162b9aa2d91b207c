"""Report emission: results CSV, plain-text tables, SVG bar charts, histograms."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .core import ParameterKind, SampleTable
from .harness import ARMS, EvalReport, SplitConfig, hyperparams_json, split_indices

CSV_COLUMNS = ["parameter", "model", "arm", "r2_percent", "rmse", "unit", "hyperparams",
               "pca_cumvar", "seconds", "r2corr_percent", "error"]

MODEL_LABELS = {"knn": "k-NN", "rf": "RF", "svm": "SVM", "mars": "MARS", "xgb": "XGB"}
ARM_LABELS = {"raw": "raw bands", "pca": "with PCA"}


def atomic_write(path, data: str | bytes) -> None:
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8",
                                                                "newline": ""})) as fh:
            fh.write(data)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _num(x: Optional[float], fmt: str) -> str:
    if x is None or not np.isfinite(x):
        return ""
    return format(x, fmt)


def report_csv(report: EvalReport, include_timing: bool = False) -> str:
    """CSV text; ``seconds`` is left blank unless ``include_timing`` so reruns
    are byte-identical."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for c in report.cells:
        m = c.metrics
        w.writerow([
            c.parameter, c.model, c.arm,
            _num(m.r_squared * 100 if m else None, ".4f"),
            _num(m.rmse if m else None, ".6g"),
            c.unit,
            hyperparams_json(c.hyperparams) if m else "",
            _num(c.pca_cumvar, ".6f"),
            _num(c.seconds, ".3f") if include_timing else "",
            _num(c.r2_corr * 100 if m else None, ".4f"),
            c.error or "",
        ])
    return buf.getvalue()


def report_text(report: EvalReport) -> str:
    """Per-parameter tables: rows are models, column pairs are the two arms."""
    lines = [
        "# Regression results",
        "# R^2 is the coefficient of determination on the test subset (percent);",
        "# PCA and scaling statistics are fitted on the training subset only.",
        "# RF/XGB hyperparameters are fixed implementation defaults; SVM uses an RBF kernel.",
        "",
    ]
    params = list(dict.fromkeys(c.parameter for c in report.cells))
    models = list(dict.fromkeys(c.model for c in report.cells))
    arms = [a for a in ARMS if any(c.arm == a for c in report.cells)]
    for p in params:
        cells = [c for c in report.cells if c.parameter == p]
        unit = cells[0].unit
        n_train, n_test = report.splits.get(p, (0, 0))
        lines.append(f"## {p}  (train {n_train}, test {n_test})")
        head = f"{'model':<6}" + "".join(f" | {ARM_LABELS[a] + ' R2%':>16} {'RMSE ' + unit:>14}"
                                         for a in arms)
        lines.append(head)
        lines.append("-" * len(head))
        for mdl in models:
            row = f"{MODEL_LABELS.get(mdl, mdl):<6}"
            for a in arms:
                match = [c for c in cells if c.model == mdl and c.arm == a]
                if not match:
                    row += f" | {'':>16} {'':>14}"
                elif match[0].metrics is None:
                    row += f" | {'error':>16} {'':>14}"
                else:
                    m = match[0].metrics
                    row += f" | {m.r_squared * 100:>16.1f} {m.rmse:>14.4g}"
            lines.append(row)
        cum = sorted({round(c.pca_cumvar, 6) for c in cells if c.pca_cumvar is not None})
        if cum:
            ks = sorted({c.pca_k for c in cells if c.pca_k is not None})
            lines.append(f"PCA components {ks}, cumulative variance ratio "
                         + ", ".join(f"{v:.6f}" for v in cum))
        for c in cells:
            if c.error:
                lines.append(f"error in {c.model}/{c.arm}: {c.error}")
        lines.append("")
    return "\n".join(lines)


def svg_bars(report: EvalReport, parameter: str) -> str:
    """Grouped bar chart of R^2 (percent): one group per model, one bar per arm."""
    cells = [c for c in report.cells if c.parameter == parameter]
    models = list(dict.fromkeys(c.model for c in cells))
    arms = [a for a in ARMS if any(c.arm == a for c in cells)]
    colors = {"raw": "#f28e2b", "pca": "#4e79a7"}
    width, height, left, bottom, top = 80 + 90 * len(models), 300, 50, 40, 30
    plot_h = height - bottom - top
    bar_w = 70 / max(len(arms), 1)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<text x="{width / 2:.1f}" y="16" text-anchor="middle">{parameter}: R2 (%)</text>']
    y0 = height - bottom
    out.append(f'<line x1="{left}" y1="{y0}" x2="{width - 10}" y2="{y0}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{y0}" stroke="black"/>')
    for tick in range(0, 101, 20):
        ty = y0 - plot_h * tick / 100
        out.append(f'<text x="{left - 4}" y="{ty + 4:.1f}" text-anchor="end">{tick}</text>')
    for i, mdl in enumerate(models):
        gx = left + 10 + 90 * i
        for j, arm in enumerate(arms):
            match = [c for c in cells if c.model == mdl and c.arm == arm and c.metrics]
            if not match:
                continue
            val = max(0.0, min(100.0, match[0].metrics.r_squared * 100))
            h = plot_h * val / 100
            out.append(f'<rect x="{gx + j * bar_w:.1f}" y="{y0 - h:.1f}" width="{bar_w - 2:.1f}" '
                       f'height="{h:.1f}" fill="{colors[arm]}"><title>{arm} '
                       f'{val:.1f}</title></rect>')
        out.append(f'<text x="{gx + 35}" y="{y0 + 15}" text-anchor="middle">'
                   f'{MODEL_LABELS.get(mdl, mdl)}</text>')
    for j, arm in enumerate(arms):
        lx = width - 120
        out.append(f'<rect x="{lx}" y="{top + 14 * j}" width="10" height="10" '
                   f'fill="{colors[arm]}"/>')
        out.append(f'<text x="{lx + 14}" y="{top + 9 + 14 * j}">{ARM_LABELS[arm]}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def histogram_counts(table: SampleTable, split: SplitConfig, n_bins: int = 10):
    """Equal-width bins over the full target range; counts per subset."""
    train, test = split_indices(table.target, split)
    y = table.target
    lo, hi = float(y.min()), float(y.max())
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, n_bins + 1)
    return edges, np.histogram(y[train], edges)[0], np.histogram(y[test], edges)[0]


def histogram_csv(edges, train_counts, test_counts) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_low", "bin_high", "train_count", "test_count"])
    for i in range(len(train_counts)):
        w.writerow([repr(float(edges[i])), repr(float(edges[i + 1])), int(train_counts[i]),
                    int(test_counts[i])])
    return buf.getvalue()
