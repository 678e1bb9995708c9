"""Minimal self-contained SVG line plots."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
          "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    first = math.ceil(lo / step) * step
    return [first + i * step for i in range(int((hi - first) / step + 1e-9) + 1)]


def _fmt(v):
    return f"{v:.3g}"


def line_plot(x, series, title="", xlabel="t", ylabel="", log_y=False,
              width=720, height=440) -> str:
    """SVG text with one polyline per entry of ``series`` (name -> y values).

    Every polyline has exactly ``len(x)`` vertices.  With ``log_y`` the
    values are plotted as ``log10`` and non-positive entries are pinned to
    the smallest positive value present.
    """
    x = np.asarray(x, float)
    ys = {name: np.asarray(y, float) for name, y in series.items()}
    for name, y in ys.items():
        if y.shape != x.shape:
            raise ValueError(f"series {name!r} has {y.size} points, expected {x.size}")
    if log_y:
        pos = np.concatenate([y[np.isfinite(y) & (y > 0)] for y in ys.values()] or [np.array([])])
        floor = float(pos.min()) if pos.size else 1.0
        ys = {n: np.log10(np.where(np.isfinite(y) & (y > 0), y, floor)) for n, y in ys.items()}
    else:
        ys = {n: np.where(np.isfinite(y), y, 0.0) for n, y in ys.items()}

    left, right, top, bottom = 70, 20, 40, 50
    pw, ph = width - left - right, height - top - bottom
    x_lo, x_hi = (float(x.min()), float(x.max())) if x.size else (0.0, 1.0)
    allv = np.concatenate(list(ys.values())) if ys and x.size else np.array([0.0, 1.0])
    y_lo, y_hi = float(allv.min()), float(allv.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5

    def sx(v):
        return left + (v - x_lo) / (x_hi - x_lo) * pw

    def sy(v):
        return top + (1.0 - (v - y_lo) / (y_hi - y_lo)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for tx in _ticks(x_lo, x_hi):
        px = sx(tx)
        out.append(f'<line x1="{px:.2f}" y1="{top + ph}" x2="{px:.2f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{px:.2f}" y="{top + ph + 18}" text-anchor="middle" font-size="11">{_fmt(tx)}</text>')
    for ty in _ticks(y_lo, y_hi):
        py = sy(ty)
        label = f"1e{ty:g}" if log_y else _fmt(ty)
        out.append(f'<line x1="{left - 5}" y1="{py:.2f}" x2="{left}" y2="{py:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{py + 4:.2f}" text-anchor="end" font-size="11">{escape(label)}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle" font-size="13">{escape(xlabel)}</text>')
    ylab = f"log10 {ylabel}" if log_y and ylabel else ylabel
    out.append(f'<text x="16" y="{top + ph / 2}" text-anchor="middle" font-size="13" '
               f'transform="rotate(-90 16 {top + ph / 2})">{escape(ylab)}</text>')
    for i, (name, y) in enumerate(ys.items()):
        color = COLORS[i % len(COLORS)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        label = escape(name, {'"': "&quot;"})
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                   f'data-series="{label}" points="{pts}"/>')
        ly = top + 14 + 16 * i
        out.append(f'<line x1="{left + pw - 150}" y1="{ly}" x2="{left + pw - 125}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw - 120}" y="{ly + 4}" font-size="11">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_line_plot(path, x, series, **kw):
    with open(path, "w") as fh:
        fh.write(line_plot(x, series, **kw))
