"""Minimal hand-written SVG plots of variation curves and keyframes."""

from __future__ import annotations

from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np


@dataclass
class Panel:
    title: str
    raw: np.ndarray
    smoothed: np.ndarray
    threshold: float
    keyframes: np.ndarray


WIDTH, PANEL_H, MARGIN = 720, 200, 40


def _polyline(ys, x0, y0, w, h, lo, hi, style):
    n = len(ys)
    if n == 0:
        return ""
    xs = x0 + (np.arange(n) / max(1, n - 1)) * w
    span = hi - lo if hi > lo else 1.0
    py = y0 + h - (np.asarray(ys) - lo) / span * h
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, py))
    return f'<polyline fill="none" {style} points="{pts}"/>'


def keyframe_svg(panels) -> str:
    """One stacked panel per curve: raw and smoothed variation, threshold, keyframe markers."""
    height = len(panels) * (PANEL_H + MARGIN) + MARGIN
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
           f'viewBox="0 0 {WIDTH} {height}">',
           '<rect width="100%" height="100%" fill="white"/>']
    w = WIDTH - 2 * MARGIN
    for i, p in enumerate(panels):
        y0 = MARGIN + i * (PANEL_H + MARGIN)
        n = len(p.raw)
        vals = np.concatenate([np.asarray(p.raw, float), np.asarray(p.smoothed, float),
                               [p.threshold, 0.0]])
        lo, hi = float(vals.min()), float(vals.max())
        span = hi - lo if hi > lo else 1.0
        out.append(f'<text x="{MARGIN}" y="{y0 - 8}" font-family="sans-serif" '
                   f'font-size="12">{escape(p.title)}</text>')
        out.append(f'<rect x="{MARGIN}" y="{y0}" width="{w}" height="{PANEL_H}" '
                   'fill="none" stroke="#999"/>')
        for k in np.asarray(p.keyframes, dtype=int):
            x = MARGIN + k / max(1, n - 1) * w
            out.append(f'<line class="keyframe" x1="{x:.2f}" y1="{y0}" x2="{x:.2f}" '
                       f'y2="{y0 + PANEL_H}" stroke="#d62728" stroke-dasharray="3,3"/>')
        out.append(_polyline(p.raw, MARGIN, y0, w, PANEL_H, lo, hi,
                             'stroke="#bbbbbb" stroke-width="1"'))
        out.append(_polyline(p.smoothed, MARGIN, y0, w, PANEL_H, lo, hi,
                             'stroke="#1f77b4" stroke-width="1.5"'))
        ty = y0 + PANEL_H - (p.threshold - lo) / span * PANEL_H
        out.append(f'<line class="threshold" x1="{MARGIN}" y1="{ty:.2f}" x2="{MARGIN + w}" '
                   f'y2="{ty:.2f}" stroke="#2ca02c"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
