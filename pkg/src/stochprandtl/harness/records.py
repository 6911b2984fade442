"""Run persistence: JSON reports, per-path records, field dumps and optional SVG plots.

Only the CLI calls into this module; solver modules never touch the filesystem.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def write_json(path: str | Path, obj) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(dumps(obj))
    return p


def read_json(path: str | Path):
    return json.loads(Path(path).read_text())


class RunDir:
    """Layout: ``report.json``, ``paths/*.json``, ``fields/*.bin``, ``plots/*``."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def prepare(self) -> "RunDir":
        self.root.mkdir(parents=True, exist_ok=True)
        return self

    @property
    def report(self) -> Path:
        return self.root / "report.json"

    def path_file(self, index: int) -> Path:
        return self.root / "paths" / f"path_{index:05d}.json"

    def field_file(self, name: str) -> Path:
        p = self.root / "fields" / f"{name}.bin"
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def plot_file(self, name: str) -> Path:
        p = self.root / "plots" / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p


def write_csv(path: str | Path, header: list[str], rows) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(repr(float(v)) for v in r))
    p.write_text("\n".join(lines) + "\n")
    return p


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def svg_chart(series: dict, title: str, xlabel: str, ylabel: str, logy: bool = False,
              width: int = 640, height: int = 400) -> str:
    """Polyline chart of ``{label: (x, y)}`` as an SVG string.

    Non-finite points (and non-positive ones on a log axis) are dropped.
    """
    left, right, top, bottom = 70, 150, 30, 50
    pw, ph = width - left - right, height - top - bottom
    clean = {}
    for label, (x, y) in series.items():
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        ok = np.isfinite(x) & np.isfinite(y)
        if logy:
            ok &= y > 0
            y = np.where(ok, np.log10(np.where(ok, y, 1.0)), 0.0)
        clean[str(label)] = (x[ok], y[ok])
    xs = [v for x, _ in clean.values() for v in x]
    ys = [v for _, y in clean.values() for v in y]
    x0, x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y0, y1 = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def px(v):
        return left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return top + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for v in _ticks(x0, x1):
        out.append(f'<text x="{px(v):.1f}" y="{top + ph + 15}" text-anchor="middle">{v:.3g}</text>')
    for v in _ticks(y0, y1):
        lab = f"1e{v:.2g}" if logy else f"{v:.3g}"
        out.append(f'<text x="{left - 5}" y="{py(v) + 4:.1f}" text-anchor="end">{lab}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="15" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 15 {top + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, (label, (x, y)) in enumerate(clean.items()):
        colour = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        if pts:
            out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1" points="{pts}"/>')
        if i < 20:
            ly = top + 12 + 14 * i
            out.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 30}" y2="{ly - 4}" '
                       f'stroke="{colour}"/>')
            out.append(f'<text x="{left + pw + 35}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path: str | Path, series: dict, title: str, xlabel: str, ylabel: str,
              logy: bool = False) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(svg_chart(series, title, xlabel, ylabel, logy))
    return p


__all__ = ["dumps", "write_json", "read_json", "RunDir", "write_csv", "svg_chart", "write_svg"]
