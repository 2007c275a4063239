"""Tiny dependency-free SVG line plots for the curve outputs."""

from __future__ import annotations

import numpy as np

from .errors import DataError

_WIDTH = 640
_HEIGHT = 420
_MARGIN_LEFT = 64
_MARGIN_RIGHT = 24
_MARGIN_TOP = 36
_MARGIN_BOTTOM = 52
_TICKS = 5


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _scale(values: np.ndarray, lo: float, hi: float, out_lo: float, out_hi: float) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    return out_lo + (values - lo) / (hi - lo) * (out_hi - out_lo)


def svg_line_plot(xs, ys, *, title: str, xlabel: str, ylabel: str) -> str:
    """Render one polyline with axes and ticks, returned as an SVG document."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size == 0:
        raise DataError("plot needs matching non-empty x and y vectors")

    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(min(ys.min(), 0.0)), float(ys.max())
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0

    plot_left = _MARGIN_LEFT
    plot_right = _WIDTH - _MARGIN_RIGHT
    plot_top = _MARGIN_TOP
    plot_bottom = _HEIGHT - _MARGIN_BOTTOM

    px = _scale(xs, x_lo, x_hi, plot_left, plot_right)
    py = _scale(ys, y_lo, y_hi, plot_bottom, plot_top)
    points = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px, py))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2:g}" y="22" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>',
        f'<line x1="{plot_left}" y1="{plot_bottom}" x2="{plot_right}" '
        f'y2="{plot_bottom}" stroke="black"/>',
        f'<line x1="{plot_left}" y1="{plot_top}" x2="{plot_left}" '
        f'y2="{plot_bottom}" stroke="black"/>',
    ]
    for i in range(_TICKS + 1):
        frac = i / _TICKS
        tx = plot_left + frac * (plot_right - plot_left)
        xv = x_lo + frac * (x_hi - x_lo)
        parts.append(
            f'<line x1="{_fmt(tx)}" y1="{plot_bottom}" x2="{_fmt(tx)}" '
            f'y2="{plot_bottom + 5}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{_fmt(tx)}" y="{plot_bottom + 20}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_fmt(xv)}</text>'
        )
        ty = plot_bottom - frac * (plot_bottom - plot_top)
        yv = y_lo + frac * (y_hi - y_lo)
        parts.append(
            f'<line x1="{plot_left - 5}" y1="{_fmt(ty)}" x2="{plot_left}" '
            f'y2="{_fmt(ty)}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{plot_left - 8}" y="{_fmt(ty)}" text-anchor="end" '
            f'dominant-baseline="middle" font-family="sans-serif" '
            f'font-size="11">{_fmt(yv)}</text>'
        )
    parts.append(
        f'<text x="{(plot_left + plot_right) / 2:g}" y="{_HEIGHT - 12}" '
        f'text-anchor="middle" font-family="sans-serif" font-size="13">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{(plot_top + plot_bottom) / 2:g}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 16 {(plot_top + plot_bottom) / 2:g})">{ylabel}</text>'
    )
    parts.append(
        f'<polyline fill="none" stroke="#1f77b4" stroke-width="1.5" points="{points}"/>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
