"""Dependency-free SVG heatmaps of probability and difference grids.

Output bytes depend only on the input arrays and style arguments.
"""
from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["probability_color", "signed_color", "heatmap_svg", "grid_svg", "difference_svg"]

_BLUE = (44, 123, 182)
_YELLOW = (255, 255, 191)
_RED = (215, 25, 28)
_WHITE = (255, 255, 255)
_MISSING = "#d0d0d0"


def _lerp(a, b, t):
    return tuple(int(round(x + (y - x) * t)) for x, y in zip(a, b))


def _hex(rgb) -> str:
    return "#%02x%02x%02x" % rgb


def probability_color(p: float) -> str:
    """blue (0) -> yellow (0.5) -> red (1)."""
    if p is None or math.isnan(p):
        return _MISSING
    p = min(max(float(p), 0.0), 1.0)
    if p <= 0.5:
        return _hex(_lerp(_BLUE, _YELLOW, p / 0.5))
    return _hex(_lerp(_YELLOW, _RED, (p - 0.5) / 0.5))


def signed_color(d: float) -> str:
    """blue (-1) -> white (0) -> red (+1)."""
    if d is None or math.isnan(d):
        return _MISSING
    d = min(max(float(d), -1.0), 1.0)
    if d < 0:
        return _hex(_lerp(_WHITE, _BLUE, -d))
    return _hex(_lerp(_WHITE, _RED, d))


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def heatmap_svg(values: np.ndarray, x_edges, y_edges, *, signed: bool = False, title: str = "",
                x_label: str = "excitation frequency", y_label: str = "excitation amplitude",
                comments: dict | None = None, cell: int = 12) -> str:
    """Heatmap with x (frequency) horizontal and y (amplitude) vertical, plus a colour bar."""
    values = np.asarray(values, dtype=float)
    nx, ny = values.shape
    color = signed_color if signed else probability_color
    left, top, bottom = 70, 30, 50
    w, h = nx * cell, ny * cell
    bar_x = left + w + 20
    width = bar_x + 70
    height = top + h + bottom
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">']
    for k, v in sorted((comments or {}).items()):
        out.append(f"<!-- {escape(str(k))}: {escape(str(v)).replace('--', '- -')} -->")
    out.append('<rect width="100%" height="100%" fill="#ffffff"/>')
    if title:
        out.append(f'<text x="{left + w / 2}" y="18" font-size="12" text-anchor="middle" '
                   f'font-family="sans-serif">{escape(title)}</text>')
    out.append('<g shape-rendering="crispEdges">')
    for i in range(nx):
        for j in range(ny):
            x = left + i * cell
            y = top + (ny - 1 - j) * cell
            out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                       f'fill="{color(values[i, j])}"/>')
    out.append("</g>")
    out.append(f'<rect x="{left}" y="{top}" width="{w}" height="{h}" fill="none" stroke="#000"/>')
    # axis ticks at both ends and the middle
    for frac in (0.0, 0.5, 1.0):
        xv = x_edges[0] + frac * (x_edges[-1] - x_edges[0])
        yv = y_edges[0] + frac * (y_edges[-1] - y_edges[0])
        out.append(f'<text x="{left + frac * w}" y="{top + h + 14}" font-size="10" '
                   f'text-anchor="middle" font-family="sans-serif">{_fmt(xv)}</text>')
        out.append(f'<text x="{left - 4}" y="{top + h - frac * h + 3}" font-size="10" '
                   f'text-anchor="end" font-family="sans-serif">{_fmt(yv)}</text>')
    out.append(f'<text x="{left + w / 2}" y="{top + h + 32}" font-size="11" text-anchor="middle" '
               f'font-family="sans-serif">{escape(x_label)}</text>')
    out.append(f'<text x="14" y="{top + h / 2}" font-size="11" text-anchor="middle" '
               f'font-family="sans-serif" transform="rotate(-90 14 {top + h / 2})">'
               f'{escape(y_label)}</text>')
    lo, hi = (-1.0, 1.0) if signed else (0.0, 1.0)
    steps = 50
    for s in range(steps):
        v = hi - (hi - lo) * (s + 0.5) / steps
        out.append(f'<rect x="{bar_x}" y="{top + s * h / steps:.2f}" width="14" '
                   f'height="{h / steps + 0.5:.2f}" fill="{color(v)}"/>')
    out.append(f'<rect x="{bar_x}" y="{top}" width="14" height="{h}" fill="none" stroke="#000"/>')
    for v in (lo, (lo + hi) / 2, hi):
        y = top + (hi - v) / (hi - lo) * h
        out.append(f'<text x="{bar_x + 18}" y="{y + 3:.2f}" font-size="10" '
                   f'font-family="sans-serif">{_fmt(v)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def grid_svg(grid, path=None, *, title: str = "", cell: int = 12) -> str:
    comments = {"seed": grid.meta.get("seed"), "config_hash": grid.meta.get("config_hash")}
    svg = heatmap_svg(grid.probabilities(), grid.omega_edges, grid.amplitude_edges,
                      title=title, comments=comments, cell=cell)
    if path is not None:
        Path(path).write_text(svg)
    return svg


def difference_svg(diff, path=None, *, title: str = "", comments: dict | None = None,
                   cell: int = 12) -> str:
    svg = heatmap_svg(diff.values, diff.omega_edges, diff.amplitude_edges, signed=True,
                      title=title, comments=comments, cell=cell)
    if path is not None:
        Path(path).write_text(svg)
    return svg
