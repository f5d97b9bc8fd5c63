"""Minimal self-contained SVG line plots (no plotting dependency).

Just enough for the run artifacts: multi-series polyline plots with axis
ticks, labels, legend and optional circle/triangle markers.  Long series are
min/max-decimated per pixel column so peaks and dips survive.  Output is
deterministic: identical data produces identical bytes.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["Series", "Markers", "line_plot"]


class Series:
    def __init__(self, x, y, label="", color="#1f77b4", width=1.2, dash=None):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.label = label
        self.color = color
        self.width = width
        self.dash = dash


class Markers:
    def __init__(self, x, y, shape="circle", color="#d62728", size=4.0, label=""):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.shape = shape  # "circle" | "triangle"
        self.color = color
        self.size = size
        self.label = label


def _nice_ticks(lo: float, hi: float, target: int = 6):
    if not math.isfinite(lo) or not math.isfinite(hi) or hi <= lo:
        return [lo]
    span = hi - lo
    raw = span / max(target, 2)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        step = mult * mag
        if span / step <= target:
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * span:
        ticks.append(0.0 if abs(t) < 1e-12 * span else t)
        t += step
    return ticks


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    a = abs(v)
    if a >= 1e4 or a < 1e-3:
        return f"{v:.2e}"
    return f"{v:.6g}"


def _decimate(x, y, max_cols: int = 1200):
    """Per-column min/max decimation preserving envelopes."""
    n = x.size
    if n <= 2 * max_cols:
        return x, y
    edges = np.linspace(0, n, max_cols + 1).astype(int)
    xs, ys = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        seg = y[a:b]
        i_min = a + int(np.argmin(seg))
        i_max = a + int(np.argmax(seg))
        for i in sorted((i_min, i_max)):
            xs.append(x[i])
            ys.append(y[i])
    return np.asarray(xs), np.asarray(ys)


def line_plot(
    path,
    series,
    markers=(),
    title="",
    xlabel="",
    ylabel="",
    size=(880, 460),
    xlim=None,
    ylim=None,
):
    """Write a standalone SVG line plot to ``path``."""
    w, h = size
    ml, mr, mt, mb = 70, 20, 34, 48

    finite_x, finite_y = [], []
    for s in series:
        keep = np.isfinite(s.x) & np.isfinite(s.y)
        if np.any(keep):
            finite_x.append(s.x[keep])
            finite_y.append(s.y[keep])
    if finite_x:
        x_lo = min(float(a.min()) for a in finite_x)
        x_hi = max(float(a.max()) for a in finite_x)
        y_lo = min(float(a.min()) for a in finite_y)
        y_hi = max(float(a.max()) for a in finite_y)
    else:
        x_lo, x_hi, y_lo, y_hi = 0.0, 1.0, 0.0, 1.0
    if xlim is not None:
        x_lo, x_hi = float(xlim[0]), float(xlim[1])
    if ylim is not None:
        y_lo, y_hi = float(ylim[0]), float(ylim[1])
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    pad = 0.04 * (y_hi - y_lo)
    if ylim is None:
        y_lo -= pad
        y_hi += pad

    def sx(x):
        return ml + (x - x_lo) / (x_hi - x_lo) * (w - ml - mr)

    def sy(y):
        return h - mb - (y - y_lo) / (y_hi - y_lo) * (h - mt - mb)

    out = []
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}" font-family="Helvetica,Arial,sans-serif">'
    )
    out.append(f'<rect width="{w}" height="{h}" fill="white"/>')
    out.append(
        f'<rect x="{ml}" y="{mt}" width="{w - ml - mr}" height="{h - mt - mb}" '
        'fill="none" stroke="#333" stroke-width="1"/>'
    )
    if title:
        out.append(
            f'<text x="{w / 2:.1f}" y="{mt - 12}" text-anchor="middle" '
            f'font-size="15">{title}</text>'
        )
    for t in _nice_ticks(x_lo, x_hi):
        px = sx(t)
        out.append(
            f'<line x1="{px:.2f}" y1="{h - mb}" x2="{px:.2f}" y2="{h - mb + 5}" stroke="#333"/>'
        )
        out.append(
            f'<text x="{px:.2f}" y="{h - mb + 18}" text-anchor="middle" font-size="11">{_fmt(t)}</text>'
        )
    for t in _nice_ticks(y_lo, y_hi):
        py = sy(t)
        out.append(
            f'<line x1="{ml - 5}" y1="{py:.2f}" x2="{ml}" y2="{py:.2f}" stroke="#333"/>'
        )
        out.append(
            f'<text x="{ml - 8}" y="{py + 4:.2f}" text-anchor="end" font-size="11">{_fmt(t)}</text>'
        )
        out.append(
            f'<line x1="{ml}" y1="{py:.2f}" x2="{w - mr}" y2="{py:.2f}" '
            'stroke="#ddd" stroke-width="0.5"/>'
        )
    if xlabel:
        out.append(
            f'<text x="{(ml + w - mr) / 2:.1f}" y="{h - 10}" text-anchor="middle" '
            f'font-size="13">{xlabel}</text>'
        )
    if ylabel:
        out.append(
            f'<text x="16" y="{(mt + h - mb) / 2:.1f}" text-anchor="middle" '
            f'font-size="13" transform="rotate(-90 16 {(mt + h - mb) / 2:.1f})">{ylabel}</text>'
        )

    out.append(f'<clipPath id="plot"><rect x="{ml}" y="{mt}" width="{w - ml - mr}" height="{h - mt - mb}"/></clipPath>')
    out.append('<g clip-path="url(#plot)">')
    for s in series:
        keep = np.isfinite(s.x) & np.isfinite(s.y)
        xd, yd = _decimate(s.x[keep], s.y[keep])
        if xd.size == 0:
            continue
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(xd, yd))
        dash = f' stroke-dasharray="{s.dash}"' if s.dash else ""
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{s.color}" '
            f'stroke-width="{s.width}"{dash}/>'
        )
    for mk in markers:
        for a, b in zip(mk.x, mk.y):
            if not (math.isfinite(a) and math.isfinite(b)):
                continue
            px, py, r = sx(a), sy(b), mk.size
            if mk.shape == "triangle":
                out.append(
                    f'<polygon points="{px:.2f},{py - r:.2f} {px - r:.2f},{py + r:.2f} '
                    f'{px + r:.2f},{py + r:.2f}" fill="none" stroke="{mk.color}" stroke-width="1.3"/>'
                )
            else:
                out.append(
                    f'<circle cx="{px:.2f}" cy="{py:.2f}" r="{r}" fill="none" '
                    f'stroke="{mk.color}" stroke-width="1.3"/>'
                )
    out.append("</g>")

    legend_items = [s for s in series if s.label] + [m for m in markers if m.label]
    ly = mt + 14
    for item in legend_items:
        color = item.color
        out.append(
            f'<line x1="{w - mr - 150}" y1="{ly - 4}" x2="{w - mr - 125}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        out.append(
            f'<text x="{w - mr - 118}" y="{ly}" font-size="11">{item.label}</text>'
        )
        ly += 16
    out.append("</svg>")
    data = "\n".join(out) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(data)
    return path
