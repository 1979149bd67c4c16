"""Minimal static SVG charts: axes with ticks, polylines, scatter points and
a legend. Enough to display logged series without a plotting library."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")
MAX_LINE_POINTS = 2000


@dataclass
class Line:
    name: str
    x: np.ndarray
    y: np.ndarray
    color: str = ""
    css_class: str = "series"


@dataclass
class Scatter:
    name: str
    x: np.ndarray
    y: np.ndarray
    color: str = "#999999"
    radius: float = 1.2


def nice_ticks(lo: float, hi: float, n: int = 6) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return []
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(1, n - 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    v = first
    while v <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return ticks


def _fmt_tick(v: float) -> str:
    return f"{v:.4g}"


def _decimate(x: np.ndarray, y: np.ndarray, limit: int) -> tuple[np.ndarray, np.ndarray]:
    if len(x) <= limit:
        return x, y
    idx = np.unique(np.linspace(0, len(x) - 1, limit).round().astype(int))
    return x[idx], y[idx]


def render(
    lines: Sequence[Line],
    scatters: Sequence[Scatter] = (),
    *,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    width: int = 800,
    height: int = 450,
) -> str:
    left, right, top, bottom = 70, 170, 40, 55
    pw, ph = width - left - right, height - top - bottom

    xs = [np.asarray(s.x, dtype=float) for s in (*lines, *scatters)]
    ys = [np.asarray(s.y, dtype=float) for s in (*lines, *scatters)]
    allx = np.concatenate(xs) if xs else np.zeros(1)
    ally = np.concatenate(ys) if ys else np.zeros(1)
    allx, ally = allx[np.isfinite(allx)], ally[np.isfinite(ally)]
    x0, x1 = (float(allx.min()), float(allx.max())) if len(allx) else (0.0, 1.0)
    y0, y1 = (float(ally.min()), float(ally.max())) if len(ally) else (0.0, 1.0)
    if x1 <= x0:
        x1 = x0 + 1.0
    if y1 <= y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(v):
        return left + (np.asarray(v) - x0) / (x1 - x0) * pw

    def py(v):
        return top + (1.0 - (np.asarray(v) - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{left + pw / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>')

    # grid and ticks
    for v in nice_ticks(x0, x1):
        X = float(px(v))
        out.append(f'<line x1="{X:.2f}" y1="{top}" x2="{X:.2f}" y2="{top + ph}" stroke="#eeeeee"/>')
        out.append(f'<text x="{X:.2f}" y="{top + ph + 16}" text-anchor="middle">{_fmt_tick(v)}</text>')
    for v in nice_ticks(y0, y1):
        Y = float(py(v))
        out.append(f'<line x1="{left}" y1="{Y:.2f}" x2="{left + pw}" y2="{Y:.2f}" stroke="#eeeeee"/>')
        out.append(f'<text x="{left - 6}" y="{Y + 4:.2f}" text-anchor="end">{_fmt_tick(v)}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    if xlabel:
        out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        cx, cy = 18, top + ph / 2
        out.append(
            f'<text x="{cx}" y="{cy:.1f}" text-anchor="middle" transform="rotate(-90 {cx} {cy:.1f})">{escape(ylabel)}</text>'
        )

    for s in scatters:
        x, y = np.asarray(s.x, dtype=float), np.asarray(s.y, dtype=float)
        out.append(f'<g class="scatter" data-name="{escape(s.name)}" fill="{s.color}">')
        for X, Y in zip(px(x).tolist(), py(y).tolist()):
            out.append(f'<circle cx="{X:.2f}" cy="{Y:.2f}" r="{s.radius}"/>')
        out.append("</g>")

    legend = [(s.name, s.color, "scatter") for s in scatters]
    for i, s in enumerate(lines):
        color = s.color or PALETTE[i % len(PALETTE)]
        x, y = _decimate(np.asarray(s.x, dtype=float), np.asarray(s.y, dtype=float), MAX_LINE_POINTS)
        pts = " ".join(f"{X:.2f},{Y:.2f}" for X, Y in zip(px(x).tolist(), py(y).tolist()))
        out.append(
            f'<polyline class="{s.css_class}" data-name="{escape(s.name)}" fill="none" '
            f'stroke="{color}" stroke-width="1.5" points="{pts}"/>'
        )
        legend.append((s.name, color, "line"))

    lx, ly = left + pw + 15, top + 10
    for k, (name, color, kind) in enumerate(legend):
        y = ly + 18 * k
        if kind == "line":
            out.append(f'<line x1="{lx}" y1="{y}" x2="{lx + 20}" y2="{y}" stroke="{color}" stroke-width="2"/>')
        else:
            out.append(f'<circle cx="{lx + 10}" cy="{y}" r="3" fill="{color}"/>')
        out.append(f'<text x="{lx + 26}" y="{y + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write(path, svg: str) -> None:
    Path(path).write_text(svg)
