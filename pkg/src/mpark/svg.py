"""Dependency-free SVG line plots and boolean rasters."""
from __future__ import annotations

import math
from html import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")
WIDTH, HEIGHT = 640, 440
MARGIN = (70, 20, 40, 50)  # left, right, top, bottom


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def _transform(values, log: bool):
    v = np.asarray(values, dtype=float)
    if log:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(v > 0, np.log10(v), np.nan)
    return v


def _ticks(lo: float, hi: float, log: bool) -> list[tuple[float, str]]:
    if log:
        return [(float(k), f"1e{k}") for k in range(math.ceil(lo), math.floor(hi) + 1)]
    return [(float(t), _fmt(t)) for t in np.linspace(lo, hi, 5)]


def line_plot(series: dict[str, tuple], *, title: str = "", xlabel: str = "", ylabel: str = "",
              logx: bool = True, logy: bool = True) -> str:
    """``series`` maps a legend label to ``(x, y)`` sequences; non-positive values are dropped on log axes."""
    data = {k: (_transform(x, logx), _transform(y, logy)) for k, (x, y) in series.items()}
    xs = np.concatenate([x[np.isfinite(x) & np.isfinite(y)] for x, y in data.values()] or [np.zeros(0)])
    ys = np.concatenate([y[np.isfinite(x) & np.isfinite(y)] for x, y in data.values()] or [np.zeros(0)])
    if xs.size == 0:
        xs = ys = np.array([0.0, 1.0])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    left, right, top, bottom = MARGIN
    pw, ph = WIDTH - left - right, HEIGHT - top - bottom

    def px(v):
        return left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return top + (1 - (v - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="white" stroke="black"/>']
    for v, lab in _ticks(x0, x1, logx):
        out.append(f'<text x="{px(v):.1f}" y="{top + ph + 15}" text-anchor="middle">{lab}</text>')
    for v, lab in _ticks(y0, y1, logy):
        out.append(f'<text x="{left - 5}" y="{py(v) + 4:.1f}" text-anchor="end">{lab}</text>')
    for i, (name, (x, y)) in enumerate(data.items()):
        colour = PALETTE[i % len(PALETTE)]
        ok = np.isfinite(x) & np.isfinite(y)
        pts = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in zip(x[ok], y[ok]))
        if pts:
            out.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="1.5"/>')
            out.extend(f'<circle cx="{px(a):.1f}" cy="{py(b):.1f}" r="2.5" fill="{colour}"/>'
                       for a, b in zip(x[ok], y[ok]))
        ly = top + 14 + 14 * i
        out.append(f'<text x="{left + 8}" y="{ly}" fill="{colour}">{escape(name)}</text>')
    out.append(f'<text x="{WIDTH / 2}" y="{top - 12}" text-anchor="middle" font-size="13">{escape(title)}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{HEIGHT - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="15" y="{top + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 15 {top + ph / 2})">{escape(ylabel)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def raster_plot(cells: np.ndarray, re_range, im_range, *, title: str = "") -> str:
    """Boolean grid (rows = imaginary axis, bottom to top) drawn as filled runs per row."""
    cells = np.asarray(cells, dtype=bool)
    ny, nx = cells.shape
    left, right, top, bottom = MARGIN
    pw, ph = WIDTH - left - right, HEIGHT - top - bottom
    cw, ch = pw / nx, ph / ny
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="white" stroke="black"/>']
    for j in range(ny):
        row = cells[j]
        y = top + (ny - 1 - j) * ch
        i = 0
        while i < nx:
            if not row[i]:
                i += 1
                continue
            k = i
            while k < nx and row[k]:
                k += 1
            out.append(f'<rect x="{left + i * cw:.2f}" y="{y:.2f}" width="{(k - i) * cw:.2f}" '
                       f'height="{ch:.2f}" fill="#4a7bd0"/>')
            i = k
    (r0, r1), (i0, i1) = re_range, im_range
    out.append(f'<text x="{left}" y="{top + ph + 15}" text-anchor="middle">{_fmt(r0)}</text>')
    out.append(f'<text x="{left + pw}" y="{top + ph + 15}" text-anchor="middle">{_fmt(r1)}</text>')
    out.append(f'<text x="{left - 5}" y="{top + ph}" text-anchor="end">{_fmt(i0)}</text>')
    out.append(f'<text x="{left - 5}" y="{top + 8}" text-anchor="end">{_fmt(i1)}</text>')
    out.append(f'<text x="{WIDTH / 2}" y="{top - 12}" text-anchor="middle" font-size="13">{escape(title)}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{HEIGHT - 10}" text-anchor="middle">Re z</text>')
    out.append(f'<text x="15" y="{top + ph / 2}" text-anchor="middle" transform="rotate(-90 15 {top + ph / 2})">Im z</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
