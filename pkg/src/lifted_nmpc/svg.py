"""Tiny SVG line-plot emitter: axes, ticks, polylines and a legend."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["Series", "line_plot", "stacked_plots"]

PALETTE = ("#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad", "#d68910", "#555555")


class Series:
    def __init__(self, label: str, x, y, dashed: bool = False, color: str | None = None):
        self.label = label
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.dashed = dashed
        self.color = color


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if not hi > lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def _decimate(x, y, limit=1500):
    if x.size <= limit:
        return x, y
    idx = np.unique(np.linspace(0, x.size - 1, limit).astype(int))
    return x[idx], y[idx]


def _panel(series: Sequence[Series], title: str, xlabel: str, ylabel: str, ox: float, oy: float, w: float, h: float):
    left, right, top, bottom = 60, 15, 28, 40
    pw, ph = w - left - right, h - top - bottom
    xs = np.concatenate([s.x for s in series])
    ys = np.concatenate([s.y[np.isfinite(s.y)] for s in series])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    if x1 <= x0:
        x1 = x0 + 1.0

    def px(v):
        return ox + left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return oy + top + (1 - (v - y0) / (y1 - y0)) * ph

    out = [f'<text x="{ox + w / 2:.1f}" y="{oy + 18:.1f}" text-anchor="middle" font-size="14">{escape(title)}</text>']
    out.append(f'<rect x="{ox + left}" y="{oy + top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>')
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{px(t):.1f}" y1="{oy + top + ph}" x2="{px(t):.1f}" y2="{oy + top + ph + 4}" stroke="#333"/>')
        out.append(f'<text x="{px(t):.1f}" y="{oy + top + ph + 16}" text-anchor="middle" font-size="11">{t:g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{ox + left - 4}" y1="{py(t):.1f}" x2="{ox + left + pw}" y2="{py(t):.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{ox + left - 6}" y="{py(t) + 4:.1f}" text-anchor="end" font-size="11">{t:.3g}</text>')
    out.append(f'<text x="{ox + left + pw / 2:.1f}" y="{oy + h - 6}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
    out.append(
        f'<text x="{ox + 14}" y="{oy + top + ph / 2:.1f}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 {ox + 14} {oy + top + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    for i, s in enumerate(series):
        color = s.color or PALETTE[i % len(PALETTE)]
        x, y = _decimate(s.x, s.y)
        keep = np.isfinite(y)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[keep], y[keep]))
        dash = ' stroke-dasharray="6,4"' if s.dashed else ""
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        ly = oy + top + 14 + 16 * i
        lx = ox + left + pw - 150
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 24}" y2="{ly - 4}" stroke="{color}" stroke-width="2"{dash}/>')
        out.append(f'<text x="{lx + 30}" y="{ly}" font-size="11">{escape(s.label)}</text>')
    return out


def stacked_plots(path, panels: Sequence[tuple], width: int = 720, panel_height: int = 240) -> Path:
    """Write vertically stacked panels; each panel is ``(series, title, xlabel, ylabel)``."""
    height = panel_height * len(panels)
    body = []
    for i, (series, title, xlabel, ylabel) in enumerate(panels):
        body += _panel(series, title, xlabel, ylabel, 0, i * panel_height, width, panel_height)
    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" '
        'font-family="sans-serif">\n<rect width="100%" height="100%" fill="white"/>\n' + "\n".join(body) + "\n</svg>\n"
    )
    path = Path(path)
    path.write_text(svg)
    return path


def line_plot(path, series: Sequence[Series], title: str = "", xlabel: str = "t [s]", ylabel: str = "") -> Path:
    return stacked_plots(path, [(series, title, xlabel, ylabel)])
