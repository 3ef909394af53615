"""Minimal SVG plots: polylines, markers, scatter and configuration panels.

CSV files remain the source of truth; these figures are for quick viewing.
"""

from __future__ import annotations

import math
import os
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["LinePlot", "configuration_svg"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")


def _nice_ticks(lo, hi, n=5):
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


class LinePlot:
    """Axes with any number of polylines, scatter sets and vertical markers."""

    def __init__(self, title: str = "", xlabel: str = "", ylabel: str = "", width=640, height=400, logy=False):
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.width, self.height = width, height
        self.logy = logy
        self._series = []
        self._markers = []

    def line(self, x, y, label: str = "", color: Optional[str] = None):
        self._series.append(("line", np.asarray(x, float), np.asarray(y, float), label, color))
        return self

    def scatter(self, x, y, label: str = "", color: Optional[str] = None):
        self._series.append(("scatter", np.asarray(x, float), np.asarray(y, float), label, color))
        return self

    def vmarker(self, x: float, label: str = ""):
        self._markers.append((float(x), label))
        return self

    def _ty(self, y):
        return np.log10(np.maximum(y, 1e-300)) if self.logy else y

    def render(self) -> str:
        W, H, L, R, T, B = self.width, self.height, 70, 20, 35, 50
        xs = np.concatenate([s[1] for s in self._series] or [np.zeros(1)])
        ys = np.concatenate([self._ty(s[2]) for s in self._series] or [np.zeros(1)])
        ok = np.isfinite(xs) & np.isfinite(ys)
        x0, x1 = float(xs[ok].min()), float(xs[ok].max())
        y0, y1 = float(ys[ok].min()), float(ys[ok].max())
        if x1 == x0:
            x0, x1 = x0 - 1, x1 + 1
        if y1 == y0:
            y0, y1 = y0 - 1, y1 + 1
        pad = 0.05 * (y1 - y0)
        y0, y1 = y0 - pad, y1 + pad

        def px(x):
            return L + (x - x0) / (x1 - x0) * (W - L - R)

        def py(y):
            return H - B - (y - y0) / (y1 - y0) * (H - T - B)

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">',
            f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
            f'<rect x="{L}" y="{T}" width="{W - L - R}" height="{H - T - B}" fill="none" stroke="black"/>',
            f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="13">{escape(self.title)}</text>',
            f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle">{escape(self.xlabel)}</text>',
            f'<text x="15" y="{H / 2}" text-anchor="middle" transform="rotate(-90 15 {H / 2})">{escape(self.ylabel)}</text>',
        ]
        for t in _nice_ticks(x0, x1):
            out.append(f'<line x1="{px(t):.1f}" y1="{H - B}" x2="{px(t):.1f}" y2="{H - B + 4}" stroke="black"/>')
            out.append(f'<text x="{px(t):.1f}" y="{H - B + 16}" text-anchor="middle">{t:.4g}</text>')
        for t in _nice_ticks(y0, y1):
            lab = f"1e{t:.3g}" if self.logy else f"{t:.4g}"
            out.append(f'<line x1="{L - 4}" y1="{py(t):.1f}" x2="{L}" y2="{py(t):.1f}" stroke="black"/>')
            out.append(f'<text x="{L - 6}" y="{py(t) + 4:.1f}" text-anchor="end">{lab}</text>')
        for xm, lab in self._markers:
            if x0 <= xm <= x1:
                out.append(
                    f'<line x1="{px(xm):.1f}" y1="{T}" x2="{px(xm):.1f}" y2="{H - B}" stroke="gray" stroke-dasharray="4,3"/>'
                )
                if lab:
                    out.append(f'<text x="{px(xm) + 2:.1f}" y="{T + 12}" fill="gray">{escape(lab)}</text>')
        for k, (kind, x, y, label, color) in enumerate(self._series):
            c = color or _COLORS[k % len(_COLORS)]
            y = self._ty(y)
            good = np.isfinite(x) & np.isfinite(y)
            if kind == "line":
                pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[good], y[good]))
                out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.3" points="{pts}"/>')
            else:
                out.extend(
                    f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="3" fill="{c}"/>' for a, b in zip(x[good], y[good])
                )
            if label:
                out.append(f'<text x="{W - R - 5}" y="{T + 15 + 14 * k}" text-anchor="end" fill="{c}">{escape(label)}</text>')
        out.append("</svg>")
        return "\n".join(out)

    def save(self, path) -> None:
        with open(os.fspath(path), "w") as fh:
            fh.write(self.render())


def configuration_svg(positions, box: Sequence[float], path=None, title: str = "", radius: float = 0.5, scale=60.0):
    """Particles as circles inside the periodic box outline."""
    P = np.asarray(positions, float).reshape(-1, 2)
    sx, sy = box
    P = np.mod(P, [sx, sy])
    m = 20
    W, H = sx * scale + 2 * m, sy * scale + 2 * m + 20
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0f}" height="{H:.0f}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{W:.0f}" height="{H:.0f}" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="16" text-anchor="middle">{escape(title)}</text>',
        f'<rect x="{m}" y="{m + 20}" width="{sx * scale:.1f}" height="{sy * scale:.1f}" fill="none" stroke="black"/>',
    ]
    for x, y in P:
        out.append(
            f'<circle cx="{m + x * scale:.2f}" cy="{m + 20 + (sy - y) * scale:.2f}" r="{radius * scale * 0.5:.1f}" '
            f'fill="#8fb8de" stroke="#1f4e79"/>'
        )
    out.append("</svg>")
    svg = "\n".join(out)
    if path is not None:
        with open(os.fspath(path), "w") as fh:
            fh.write(svg)
    return svg
