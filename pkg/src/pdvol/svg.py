"""Minimal SVG writers for line and scatter plots (no plotting library)."""
from __future__ import annotations

import math

import numpy as np

_W, _H, _PAD = 640, 400, 50


def _scale(vals, lo_px, hi_px):
    v = np.asarray(vals, dtype=float)
    fin = v[np.isfinite(v)]
    if fin.size == 0:
        return np.full(v.shape, (lo_px + hi_px) / 2.0), (0.0, 1.0)
    lo, hi = float(fin.min()), float(fin.max())
    if hi - lo < 1e-12 * max(1.0, abs(lo)):
        lo, hi = lo - 0.5, hi + 0.5
    return lo_px + (v - lo) / (hi - lo) * (hi_px - lo_px), (lo, hi)


def _fmt(v):
    return f"{v:.6g}"


def _frame(title, xr, yr, xlabel, ylabel):
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
           f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" height="{_H - 2 * _PAD}" '
           'fill="none" stroke="black"/>',
           f'<text x="{_W / 2}" y="{_PAD / 2}" text-anchor="middle">{title}</text>',
           f'<text x="{_W / 2}" y="{_H - 10}" text-anchor="middle">{xlabel} [{_fmt(xr[0])}, {_fmt(xr[1])}]</text>',
           f'<text x="12" y="{_H / 2}" transform="rotate(-90 12 {_H / 2})" text-anchor="middle">'
           f'{ylabel} [{_fmt(yr[0])}, {_fmt(yr[1])}]</text>']
    return out


def _coords(x, y):
    px, xr = _scale(x, _PAD, _W - _PAD)
    py, yr = _scale(y, _H - _PAD, _PAD)
    return px, py, xr, yr


def line_svg(series, path, title="", xlabel="x", ylabel="y",
             colors=("steelblue", "firebrick", "darkgreen", "orange")) -> None:
    """``series``: list of ``(x, y)`` pairs sharing one pair of axes.  Non-finite points break the line."""
    xs = np.concatenate([np.asarray(x, float) for x, _ in series])
    ys = np.concatenate([np.asarray(y, float) for _, y in series])
    _, xr = _scale(xs, 0, 1)
    _, yr = _scale(ys, 0, 1)
    out = _frame(title, xr, yr, xlabel, ylabel)
    for (x, y), c in zip(series, colors * 8):
        x, y = np.asarray(x, float), np.asarray(y, float)
        px = _PAD + (x - xr[0]) / (xr[1] - xr[0]) * (_W - 2 * _PAD)
        py = _H - _PAD - (y - yr[0]) / (yr[1] - yr[0]) * (_H - 2 * _PAD)
        run = []
        for a, b in zip(px, py):
            if math.isfinite(a) and math.isfinite(b):
                run.append(f"{a:.2f},{b:.2f}")
            elif run:
                out.append(f'<polyline fill="none" stroke="{c}" points="{" ".join(run)}"/>')
                run = []
        if run:
            out.append(f'<polyline fill="none" stroke="{c}" points="{" ".join(run)}"/>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def scatter_svg(x, y, path, title="", xlabel="x", ylabel="y", line=None) -> None:
    """Scatter plot with an optional fitted line ``(slope, intercept)``."""
    px, py, xr, yr = _coords(x, y)
    out = _frame(title, xr, yr, xlabel, ylabel)
    for a, b in zip(px, py):
        if math.isfinite(a) and math.isfinite(b):
            out.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="2" fill="steelblue"/>')
    if line is not None:
        slope, icpt = line
        ends = []
        for xv in xr:
            yv = slope * xv + icpt
            ex = _PAD + (xv - xr[0]) / (xr[1] - xr[0]) * (_W - 2 * _PAD)
            ey = _H - _PAD - (yv - yr[0]) / (yr[1] - yr[0]) * (_H - 2 * _PAD)
            ends.append(f"{ex:.2f},{ey:.2f}")
        out.append(f'<polyline fill="none" stroke="firebrick" points="{" ".join(ends)}"/>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
