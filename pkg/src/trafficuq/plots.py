"""Hand-rolled SVG charts: line/band plots and box plots."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 720, 420
MARGIN = dict(left=70, right=170, top=40, bottom=60)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f")


class _Axes:
    def __init__(self, xlim, ylim):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1.0
        self.pw = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(self, x):
        return MARGIN["left"] + (np.asarray(x, float) - self.x0) / (self.x1 - self.x0) * self.pw

    def sy(self, y):
        return MARGIN["top"] + (1.0 - (np.asarray(y, float) - self.y0) / (self.y1 - self.y0)) * self.ph


def _nice_ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return list(np.arange(start, hi + step * 1e-9, step))


def _frame(ax: _Axes, title, xlabel, ylabel, xticks=None):
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
             f'font-family="sans-serif" font-size="12">',
             f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
             f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>']
    left, top = MARGIN["left"], MARGIN["top"]
    parts.append(f'<rect x="{left}" y="{top}" width="{ax.pw}" height="{ax.ph}" fill="none" stroke="#333"/>')
    for v in _nice_ticks(ax.y0, ax.y1):
        y = ax.sy(v)
        parts.append(f'<line x1="{left}" x2="{left + ax.pw}" y1="{y:.1f}" y2="{y:.1f}" stroke="#ddd"/>')
        parts.append(f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end">{v:g}</text>')
    ticks = xticks if xticks is not None else [(v, f"{v:g}") for v in _nice_ticks(ax.x0, ax.x1)]
    for v, label in ticks:
        x = ax.sx(v)
        parts.append(f'<text x="{x:.1f}" y="{top + ax.ph + 18}" text-anchor="middle">{escape(label)}</text>')
    parts.append(f'<text x="{left + ax.pw / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle">{escape(xlabel)}</text>')
    parts.append(f'<text transform="translate(18,{top + ax.ph / 2:.1f}) rotate(-90)" '
                 f'text-anchor="middle">{escape(ylabel)}</text>')
    return parts


def _legend(parts, labels):
    x = WIDTH - MARGIN["right"] + 12
    for i, (label, color) in enumerate(labels):
        y = MARGIN["top"] + 14 + 18 * i
        parts.append(f'<rect x="{x}" y="{y - 9}" width="12" height="10" fill="{color}"/>')
        parts.append(f'<text x="{x + 18}" y="{y}">{escape(label)}</text>')


def _polyline(ax, x, y, color, width=1.5, dash=None):
    pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(ax.sx(x), ax.sy(y)))
    extra = f' stroke-dasharray="{dash}"' if dash else ""
    return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"{extra}/>'


def _write(parts, path):
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def interval_band_plot(x, y_true, y_hat, lower, upper, path, title="", xlabel="time step", ylabel="flow"):
    """Shaded interval band with the observed and forecast series on top."""
    x = np.asarray(x, float)
    ys = np.concatenate([np.asarray(a, float) for a in (y_true, y_hat, lower, upper)])
    ax = _Axes((x.min(), x.max()), (min(0.0, ys.min()), ys.max() * 1.05))
    parts = _frame(ax, title, xlabel, ylabel)
    top = [f"{a:.1f},{b:.1f}" for a, b in zip(ax.sx(x), ax.sy(upper))]
    bottom = [f"{a:.1f},{b:.1f}" for a, b in zip(ax.sx(x[::-1]), ax.sy(np.asarray(lower, float)[::-1]))]
    parts.append(f'<polygon points="{" ".join(top + bottom)}" fill="{PALETTE[0]}" fill-opacity="0.25" stroke="none"/>')
    parts.append(_polyline(ax, x, y_true, "#000"))
    parts.append(_polyline(ax, x, y_hat, PALETTE[1], dash="5,3"))
    _legend(parts, [("interval", PALETTE[0]), ("observed", "#000"), ("forecast", PALETTE[1])])
    _write(parts, path)


def line_plot(series, path, title="", xlabel="", ylabel="", diagonal=False, xlim=None, ylim=None):
    """``series`` is a list of ``(label, x, y)``; ``diagonal`` draws the identity line."""
    xs = np.concatenate([np.asarray(s[1], float) for s in series])
    ys = np.concatenate([np.asarray(s[2], float) for s in series])
    ax = _Axes(xlim or (xs.min(), xs.max()), ylim or (ys.min(), ys.max()))
    parts = _frame(ax, title, xlabel, ylabel)
    if diagonal:
        parts.append(_polyline(ax, [ax.x0, ax.x1], [ax.x0, ax.x1], "#888", 1.0, dash="4,4"))
    labels = []
    for i, (label, x, y) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        parts.append(_polyline(ax, x, y, color))
        labels.append((label, color))
    _legend(parts, labels)
    _write(parts, path)


def box_plot(groups, path, title="", ylabel="", reference=None):
    """``groups`` is a list of ``(label, values)``; whiskers span 1.5 IQR."""
    groups = [(label, np.asarray(v, float)) for label, v in groups if len(v)]
    if not groups:
        raise ValueError("no data to plot")
    allv = np.concatenate([v for _, v in groups])
    lo, hi = allv.min(), allv.max()
    if reference is not None:
        lo, hi = min(lo, reference), max(hi, reference)
    pad = 0.05 * (hi - lo or 1.0)
    ax = _Axes((0.5, len(groups) + 0.5), (lo - pad, hi + pad))
    parts = _frame(ax, title, "", ylabel, xticks=[(i + 1, g[0]) for i, g in enumerate(groups)])
    if reference is not None:
        parts.append(_polyline(ax, [ax.x0, ax.x1], [reference, reference], "#888", 1.0, dash="4,4"))
    half = 0.3 * ax.pw / len(groups)
    for i, (label, v) in enumerate(groups):
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        iqr = q3 - q1
        wlo = v[v >= q1 - 1.5 * iqr].min()
        whi = v[v <= q3 + 1.5 * iqr].max()
        cx = float(ax.sx(i + 1))
        color = PALETTE[i % len(PALETTE)]
        parts.append(f'<line x1="{cx:.1f}" x2="{cx:.1f}" y1="{ax.sy(wlo):.1f}" y2="{ax.sy(whi):.1f}" stroke="#333"/>')
        parts.append(f'<rect x="{cx - half:.1f}" y="{ax.sy(q3):.1f}" width="{2 * half:.1f}" '
                     f'height="{max(ax.sy(q1) - ax.sy(q3), 0.5):.1f}" fill="{color}" fill-opacity="0.5" stroke="#333"/>')
        parts.append(f'<line x1="{cx - half:.1f}" x2="{cx + half:.1f}" y1="{ax.sy(med):.1f}" y2="{ax.sy(med):.1f}" '
                     f'stroke="#000" stroke-width="2"/>')
        for o in v[(v < wlo) | (v > whi)]:
            parts.append(f'<circle cx="{cx:.1f}" cy="{ax.sy(o):.1f}" r="2.5" fill="none" stroke="#333"/>')
    _write(parts, path)
