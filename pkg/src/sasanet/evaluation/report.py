"""CSV and SVG emission for experiment results.

The report directory layout is fixed: metrics.csv, masking.csv, adding.csv,
subset_size.csv, oracle_rmse.csv, timing.csv, and plots/*.svg. Only the
sections present in the results dict are written. Floats are serialized via
``repr`` so reruns with identical inputs are byte-identical.
"""
from __future__ import annotations

import csv
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (np.floating,)):
        return repr(float(v))
    return str(v)


def write_csv(path, rows: list[dict], columns: list[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])
    return path


def _columns_for(rows: list[dict], leading: list[str]) -> list[str]:
    cols = list(leading)
    for row in rows:
        for key in row:
            if key not in cols:
                cols.append(key)
    return cols


# ---------------------------------------------------------------------------
# plain SVG plots
# ---------------------------------------------------------------------------

def _svg(width: int, height: int, body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>'] + body + ["</svg>"])


def attribution_scatter_svg(feature_names: list[str], phi: np.ndarray, seed: int = 0) -> str:
    """One row per feature (ordered by mean |value|, largest on top), one
    dot per sample at its attribution value, vertical jitter only."""
    phi = np.atleast_2d(np.asarray(phi, dtype=np.float64))
    order = np.argsort(-np.abs(phi).mean(axis=0), kind="mergesort")
    width, row_h, left = 640, 26, 150
    height = row_h * len(order) + 50
    lo = float(phi.min()) if phi.size else -1.0
    hi = float(phi.max()) if phi.size else 1.0
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    lo, hi = lo - 0.05 * span, hi + 0.05 * span

    def sx(v):
        return left + (v - lo) / (hi - lo) * (width - left - 20)

    rng = np.random.default_rng(seed)
    body = []
    if lo < 0 < hi:
        x0 = sx(0.0)
        body.append(f'<line x1="{x0:.1f}" y1="20" x2="{x0:.1f}" y2="{height - 30}" '
                    'stroke="#999" stroke-dasharray="4,3"/>')
    for r, j in enumerate(order):
        cy = 35 + r * row_h
        body.append(f'<text x="8" y="{cy + 4}" font-size="12" font-family="sans-serif">'
                    f'{escape(str(feature_names[j]))}</text>')
        jitter = rng.uniform(-row_h * 0.28, row_h * 0.28, size=phi.shape[0])
        for i in range(phi.shape[0]):
            v = phi[i, j]
            color = "#d62728" if v >= 0 else "#1f77b4"
            body.append(f'<circle cx="{sx(v):.1f}" cy="{cy + jitter[i]:.1f}" r="2.2" '
                        f'fill="{color}" fill-opacity="0.55"/>')
    body.append(f'<text x="{left}" y="{height - 8}" font-size="11" '
                'font-family="sans-serif">attribution value</text>')
    return _svg(width, height, body)


def attribution_bar_svg(feature_names: list[str], phi: np.ndarray, bias: float, f: float) -> str:
    """Horizontal signed bars for one sample, largest |value| on top."""
    phi = np.asarray(phi, dtype=np.float64)
    order = np.argsort(-np.abs(phi), kind="mergesort")
    width, row_h, left = 640, 24, 150
    height = row_h * phi.size + 70
    amax = float(np.abs(phi).max()) if phi.size else 1.0
    amax = amax if amax > 0 else 1.0
    mid = left + (width - left - 20) / 2
    half = (width - left - 20) / 2

    def sx(v):
        return mid + v / amax * half * 0.95

    body = [f'<line x1="{mid:.1f}" y1="20" x2="{mid:.1f}" y2="{height - 50}" stroke="#999"/>']
    for r, j in enumerate(order):
        cy = 30 + r * row_h
        v = float(phi[j])
        x0, x1 = sorted((sx(0.0), sx(v)))
        color = "#d62728" if v >= 0 else "#1f77b4"
        body.append(f'<text x="8" y="{cy + 12}" font-size="12" font-family="sans-serif">'
                    f'{escape(str(feature_names[j]))}</text>')
        body.append(f'<rect x="{x0:.1f}" y="{cy}" width="{max(x1 - x0, 0.5):.1f}" '
                    f'height="{row_h - 8}" fill="{color}" fill-opacity="0.8"/>')
        body.append(f'<text x="{sx(v) + (4 if v >= 0 else -4):.1f}" y="{cy + 12}" '
                    f'font-size="10" font-family="sans-serif" '
                    f'text-anchor="{"start" if v >= 0 else "end"}">{v:.3f}</text>')
    body.append(f'<text x="8" y="{height - 24}" font-size="11" font-family="sans-serif">'
                f'bias = {bias:.4f}, output = {f:.4f}</text>')
    return _svg(width, height, body)


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------

def emit_report(results: dict, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    if "metrics" in results:
        rows = [{"metric": k, "value": v} for k, v in results["metrics"].items()]
        written.append(write_csv(out_dir / "metrics.csv", rows, ["metric", "value"]))
    for key, fname, leading in (
        ("masking", "masking.csv", ["method", "k"]),
        ("adding", "adding.csv", ["method", "k"]),
        ("subset_size", "subset_size.csv", ["k"]),
        ("timing", "timing.csv", ["method"]),
        ("oracle_rmse", "oracle_rmse.csv", ["sample", "feature"]),
    ):
        if key in results:
            rows = results[key]
            written.append(write_csv(out_dir / fname, rows, _columns_for(rows, leading)))

    if "attributions" in results:
        att = results["attributions"]
        plots = out_dir / "plots"
        plots.mkdir(exist_ok=True)
        scatter = attribution_scatter_svg(att["feature_names"], att["phi"],
                                          seed=att.get("seed", 0))
        (plots / "attribution_overview.svg").write_text(scatter)
        written.append(plots / "attribution_overview.svg")
        if len(att["phi"]) > 0:
            bar = attribution_bar_svg(att["feature_names"], np.asarray(att["phi"])[0],
                                      att.get("phi0", 0.0), att.get("f0", 0.0))
            (plots / "attribution_sample0.svg").write_text(bar)
            written.append(plots / "attribution_sample0.svg")
    return written
