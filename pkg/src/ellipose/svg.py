"""Minimal self-contained SVG line and bar charts."""

from __future__ import annotations

from html import escape
from typing import Mapping, Sequence

import numpy as np

from .io import atomic_writer

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 60, 150, 30, 50


def _frame(title, xlabel, ylabel, x0, x1, y0, y1) -> list:
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">',
             f'<rect width="{W}" height="{H}" fill="white"/>',
             f'<text x="{W / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
             f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
             f'<text x="{LEFT + pw / 2}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>',
             f'<text x="14" y="{TOP + ph / 2}" text-anchor="middle" transform="rotate(-90 14 {TOP + ph / 2})">{escape(ylabel)}</text>']
    for k in range(6):
        fx = x0 + (x1 - x0) * k / 5
        fy = y0 + (y1 - y0) * k / 5
        px = LEFT + pw * k / 5
        py = TOP + ph - ph * k / 5
        parts.append(f'<text x="{px:.1f}" y="{TOP + ph + 15}" text-anchor="middle">{fx:.3g}</text>')
        parts.append(f'<text x="{LEFT - 5}" y="{py + 4:.1f}" text-anchor="end">{fy:.3g}</text>')
        parts.append(f'<line x1="{LEFT}" x2="{LEFT + pw}" y1="{py:.1f}" y2="{py:.1f}" stroke="#ddd"/>')
    return parts


def line_chart(path, series: Mapping[str, tuple], title="", xlabel="", ylabel="", y_range=(0.0, 1.0)) -> None:
    """``series`` maps a legend name to (x values, y values)."""
    xs = np.concatenate([np.asarray(x, float) for x, _ in series.values()]) if series else np.array([0.0, 1.0])
    x0, x1 = float(xs.min()), float(xs.max())
    if x1 <= x0:
        x1 = x0 + 1.0
    y0, y1 = y_range
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM
    parts = _frame(title, xlabel, ylabel, x0, x1, y0, y1)
    for k, (name, (x, y)) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{LEFT + pw * (xi - x0) / (x1 - x0):.2f},{TOP + ph - ph * (min(max(yi, y0), y1) - y0) / (y1 - y0):.2f}"
                       for xi, yi in zip(x, y))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{pts}"/>')
        ly = TOP + 15 * (k + 1)
        parts.append(f'<line x1="{W - RIGHT + 10}" x2="{W - RIGHT + 30}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{W - RIGHT + 35}" y="{ly + 4}">{escape(name)}</text>')
    parts.append("</svg>")
    with atomic_writer(path) as fh:
        fh.write("\n".join(parts) + "\n")


def bar_chart(path, labels: Sequence[str], values: Sequence[float], title="", ylabel="", log=True) -> None:
    """Bars on a log10 axis by default (errors span many decades)."""
    v = np.asarray(values, float)
    shown = np.log10(np.maximum(v, 1e-12)) if log else v
    lo = float(np.floor(shown.min())) if log else 0.0
    hi = float(np.ceil(shown.max())) if shown.size else 1.0
    if hi <= lo:
        hi = lo + 1.0
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM
    parts = _frame(title, "", ("log10 " if log else "") + ylabel, 0, len(labels), lo, hi)
    bw = pw / max(1, len(labels))
    for k, (lab, s) in enumerate(zip(labels, shown)):
        hpx = ph * (s - lo) / (hi - lo)
        x = LEFT + bw * k + 0.15 * bw
        parts.append(f'<rect x="{x:.1f}" y="{TOP + ph - hpx:.1f}" width="{0.7 * bw:.1f}" height="{hpx:.1f}" fill="{PALETTE[k % len(PALETTE)]}"/>')
        parts.append(f'<text x="{x + 0.35 * bw:.1f}" y="{TOP + ph - hpx - 3:.1f}" text-anchor="middle" font-size="9">{escape(lab)}</text>')
    parts.append("</svg>")
    with atomic_writer(path) as fh:
        fh.write("\n".join(parts) + "\n")
