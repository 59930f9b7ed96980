"""Minimal log-log SVG plots written as plain path elements."""

from __future__ import annotations

import math
from html import escape

WIDTH, HEIGHT = 640, 440
LEFT, RIGHT, TOP, BOTTOM = 78, 170, 40, 58
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _n(v: float) -> str:
    return f"{v:.2f}"


def _log_range(values):
    vals = [math.log10(v) for v in values if v > 0 and math.isfinite(v)]
    if not vals:
        return -1.0, 1.0
    lo, hi = min(vals), max(vals)
    if hi - lo < 1e-9:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.04 * (hi - lo)
    return lo - pad, hi + pad


def loglog_svg(series, title: str, xlabel: str, ylabel: str) -> str:
    """``series``: dicts with label, x, y and style ("points" or "line")."""
    xs = [x for s in series for x in s["x"]]
    ys = [y for s in series for y in s["y"]]
    x0, x1 = _log_range(xs)
    y0, y1 = _log_range(ys)
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(x):
        return LEFT + (math.log10(x) - x0) / (x1 - x0) * pw

    def py(y):
        return TOP + ph - (math.log10(y) - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2 - RIGHT / 2:.0f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for axis, (a, b) in (("x", (x0, x1)), ("y", (y0, y1))):
        for d in range(math.ceil(a), math.floor(b) + 1):
            if axis == "x":
                p = px(10.0 ** d)
                out.append(f'<path d="M{_n(p)} {TOP + ph} V{TOP}" stroke="#ddd"/>')
                out.append(f'<text x="{_n(p)}" y="{TOP + ph + 16}" text-anchor="middle">1e{d}</text>')
            else:
                p = py(10.0 ** d)
                out.append(f'<path d="M{LEFT} {_n(p)} H{LEFT + pw}" stroke="#ddd"/>')
                out.append(f'<text x="{LEFT - 6}" y="{_n(p + 4)}" text-anchor="end">1e{d}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.0f}" y="{HEIGHT - 16}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="18" y="{TOP + ph / 2:.0f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {TOP + ph / 2:.0f})">{escape(ylabel)}</text>')
    for i, s in enumerate(series):
        color = s.get("color", PALETTE[i % len(PALETTE)])
        pts = [(px(x), py(y)) for x, y in zip(s["x"], s["y"]) if x > 0 and y > 0
               and math.isfinite(x) and math.isfinite(y)]
        if s.get("style", "points") == "line" and len(pts) > 1:
            d = "M" + " L".join(f"{_n(a)} {_n(b)}" for a, b in pts)
            dash = ' stroke-dasharray="5 3"' if s.get("dashed") else ""
            out.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        else:
            out += [f'<circle cx="{_n(a)}" cy="{_n(b)}" r="2.5" fill="{color}"/>' for a, b in pts]
        ly = TOP + 14 + 16 * i
        if s.get("label") and ly < TOP + ph:
            out.append(f'<path d="M{LEFT + pw + 10} {ly - 4} h16" stroke="{color}" stroke-width="3"/>')
            out.append(f'<text x="{LEFT + pw + 30}" y="{ly}">{escape(s["label"][:22])}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
