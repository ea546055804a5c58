"""Minimal standalone SVG line charts for result tables (no plotting dependency)."""
from __future__ import annotations

import hashlib
import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 720, 460
MARGIN = dict(left=80, right=170, top=40, bottom=60)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
MARKERS = ("circle", "square", "triangle", "diamond")


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _log_ticks(lo, hi):
    a, b = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
    if b == a:
        b += 1
    return [10.0**k for k in range(a, b + 1)]


def _lin_ticks(lo, hi, count=6):
    if hi == lo:
        hi = lo + 1.0
    raw = (hi - lo) / (count - 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=raw)
    start = math.floor(lo / step) * step
    ticks, v = [], start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 12))
        v += step
    if ticks[-1] < hi:
        ticks.append(ticks[-1] + step)
    return ticks


def _fmt(v):
    if v == 0:
        return "0"
    if abs(v) >= 1e5 or abs(v) < 1e-3:
        return f"{v:.0e}"
    return f"{v:g}"


def _marker(kind, x, y, color):
    r = 4
    if kind == "square":
        return f'<rect x="{x - r:.2f}" y="{y - r:.2f}" width="{2 * r}" height="{2 * r}" fill="{color}"/>'
    if kind == "triangle":
        pts = f"{x:.2f},{y - r:.2f} {x - r:.2f},{y + r:.2f} {x + r:.2f},{y + r:.2f}"
        return f'<polygon points="{pts}" fill="{color}"/>'
    if kind == "diamond":
        pts = f"{x:.2f},{y - r:.2f} {x + r:.2f},{y:.2f} {x:.2f},{y + r:.2f} {x - r:.2f},{y:.2f}"
        return f'<polygon points="{pts}" fill="{color}"/>'
    return f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r}" fill="{color}"/>'


def render(series, xlabel, ylabel, title="", logx=False, logy=True, checksum=None):
    """SVG text for ``series``: a dict ``name -> [(x, y), ...]``.

    Points with non-positive values on a log axis are dropped.
    """
    clean = {}
    for name, pts in series.items():
        keep = [(float(x), float(y)) for x, y in pts if (not logx or x > 0) and (not logy or y > 0)]
        keep = [p for p in keep if math.isfinite(p[0]) and math.isfinite(p[1])]
        if keep:
            clean[name] = sorted(keep)
    if not clean:
        raise ValueError("nothing to plot")
    xs = [p[0] for pts in clean.values() for p in pts]
    ys = [p[1] for pts in clean.values() for p in pts]
    xt = _log_ticks(min(xs), max(xs)) if logx else _lin_ticks(min(xs), max(xs))
    yt = _log_ticks(min(ys), max(ys)) if logy else _lin_ticks(min(ys), max(ys))
    fx = math.log10 if logx else float
    fy = math.log10 if logy else float
    x0, x1 = fx(xt[0]), fx(xt[-1])
    y0, y1 = fy(yt[0]), fy(yt[-1])
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x):
        return MARGIN["left"] + (fx(x) - x0) / ((x1 - x0) or 1.0) * pw

    def py(y):
        return MARGIN["top"] + ph - (fy(y) - y0) / ((y1 - y0) or 1.0) * ph

    out = ['<?xml version="1.0" encoding="UTF-8"?>']
    if checksum:
        out.append(f"<!-- source sha256: {checksum} -->")
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">'
    )
    out.append(f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    left, top, bottom, right = MARGIN["left"], MARGIN["top"], MARGIN["top"] + ph, MARGIN["left"] + pw
    for t in yt:
        y = py(t)
        out.append(f'<line x1="{left}" y1="{y:.2f}" x2="{right}" y2="{y:.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.2f}" text-anchor="end">{escape(_fmt(t))}</text>')
    for t in xt:
        x = px(t)
        out.append(f'<line x1="{x:.2f}" y1="{top}" x2="{x:.2f}" y2="{bottom}" stroke="#eee"/>')
        out.append(f'<text x="{x:.2f}" y="{bottom + 18}" text-anchor="middle">{escape(_fmt(t))}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="20" y="{top + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 20 {top + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    for i, (name, pts) in enumerate(clean.items()):
        color = PALETTE[i % len(PALETTE)]
        marker = MARKERS[i % len(MARKERS)]
        path = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts)
        out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
        out.extend(_marker(marker, px(x), py(y), color) for x, y in pts)
        ly = top + 10 + 20 * i
        out.append(f'<line x1="{right + 15}" y1="{ly}" x2="{right + 40}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(_marker(marker, right + 27.5, ly, color))
        out.append(f'<text x="{right + 46}" y="{ly + 4}">{escape(str(name))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
