"""Minimal deterministic SVG line charts."""

from __future__ import annotations

import datetime as dt
import math
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 360
MARGIN = dict(left=60, right=20, top=30, bottom=40)
YEAR_COLORS = {2018: "#9e9e9e", 2019: "#616161", 2020: "#d62728"}
CHANGEPOINT_COLORS = {"mobility": "#1f77b4", "normality": "#2ca02c"}


def _f(x: float) -> str:
    return f"{x:.3f}"


class Axes:
    def __init__(self, xlim, ylim):
        x0, x1 = xlim
        y0, y1 = ylim
        if x1 <= x0:
            x1 = x0 + 1.0
        if y1 <= y0:
            pad = abs(y0) * 0.1 or 1.0
            y0, y1 = y0 - pad, y1 + pad
        self.x0, self.x1, self.y0, self.y1 = x0, x1, y0, y1
        self.pw = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def x(self, v):
        return MARGIN["left"] + (v - self.x0) / (self.x1 - self.x0) * self.pw

    def y(self, v):
        return MARGIN["top"] + (self.y1 - v) / (self.y1 - self.y0) * self.ph

    @property
    def y_scale(self) -> float:
        """Pixels per data unit on the y axis."""
        return self.ph / (self.y1 - self.y0)


def _nice_ticks(lo, hi, n=5):
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / n
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _frame(ax: Axes, title: str, xlabel: str, ylabel: str) -> list[str]:
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
    ]
    left, bottom = MARGIN["left"], HEIGHT - MARGIN["bottom"]
    out.append(
        f'<g class="axes" stroke="black" stroke-width="1">'
        f'<line x1="{left}" y1="{MARGIN["top"]}" x2="{left}" y2="{bottom}"/>'
        f'<line x1="{left}" y1="{bottom}" x2="{WIDTH - MARGIN["right"]}" y2="{bottom}"/></g>'
    )
    for t in _nice_ticks(ax.y0, ax.y1):
        y = _f(ax.y(t))
        out.append(f'<text class="ytick" x="{left - 5}" y="{y}" text-anchor="end" dy="4">{t:g}</text>')
    for t in _nice_ticks(ax.x0, ax.x1):
        x = _f(ax.x(t))
        out.append(f'<text class="xtick" x="{x}" y="{bottom + 15}" text-anchor="middle">{t:g}</text>')
    out.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 5}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="14" y="{HEIGHT / 2}" text-anchor="middle" '
        f'transform="rotate(-90 14 {HEIGHT / 2})">{escape(ylabel)}</text>'
    )
    return out


def _polyline(ax, xs, ys, color, cls, extra=""):
    pts = []
    runs = []
    for x, y in zip(xs, ys):
        if y is None or (isinstance(y, float) and math.isnan(y)):
            if pts:
                runs.append(pts)
                pts = []
            continue
        pts.append(f"{_f(ax.x(x))},{_f(ax.y(y))}")
    if pts:
        runs.append(pts)
    return [
        f'<polyline class="{cls}" fill="none" stroke="{color}" stroke-width="1.5"{extra} points="{" ".join(r)}"/>'
        for r in runs
    ]


def series_chart(
    title: str,
    by_year: Mapping[int, tuple[Sequence[float], Sequence[float]]],
    markers: Sequence[tuple[str, float]] = (),
    ylabel: str = "7-day average",
) -> str:
    """Per-year lines against day of year with vertical changepoint markers."""
    xs = [x for xv, _ in by_year.values() for x in xv]
    ys = [y for _, yv in by_year.values() for y in yv if not math.isnan(y)]
    ax = Axes((min(xs, default=0.0), max(xs, default=1.0)), (min(ys, default=0.0), max(ys, default=1.0)))
    out = _frame(ax, title, "day of year", ylabel)
    for year in sorted(by_year):
        xv, yv = by_year[year]
        out += _polyline(ax, xv, yv, YEAR_COLORS.get(year, "#000000"), f"series year-{year}")
    for i, year in enumerate(sorted(by_year)):
        color = YEAR_COLORS.get(year, "#000000")
        out.append(
            f'<text class="legend" x="{WIDTH - MARGIN["right"] - 5}" y="{MARGIN["top"] + 12 + 13 * i}" '
            f'text-anchor="end" fill="{color}">{year}</text>'
        )
    for kind, x in markers:
        px = _f(ax.x(x))
        out.append(
            f'<line class="changepoint {kind}" x1="{px}" y1="{MARGIN["top"]}" x2="{px}" '
            f'y2="{HEIGHT - MARGIN["bottom"]}" stroke="{CHANGEPOINT_COLORS.get(kind, "#000")}" '
            f'stroke-dasharray="4 3"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def effects_chart(title: str, n: Sequence[int], delta: Sequence[float], se: Sequence[float]) -> str:
    """Effect curve over window index with a shaded +/- 2 SE band."""
    lo = [d - 2 * s for d, s in zip(delta, se)]
    hi = [d + 2 * s for d, s in zip(delta, se)]
    ax = Axes(
        (min(n, default=0), max(n, default=1)),
        (min([0.0, *lo]), max([0.0, *hi])),
    )
    out = _frame(ax, title, "days after mobility changepoint", "log effect")
    if n:
        upper = [f"{_f(ax.x(x))},{_f(ax.y(v))}" for x, v in zip(n, hi)]
        lower = [f"{_f(ax.x(x))},{_f(ax.y(v))}" for x, v in reversed(list(zip(n, lo)))]
        out.append(
            f'<polygon class="ci-band" fill="#1f77b4" fill-opacity="0.25" stroke="none" '
            f'points="{" ".join(upper + lower)}"/>'
        )
    z = _f(ax.y(0.0))
    out.append(
        f'<line class="zero" x1="{MARGIN["left"]}" y1="{z}" x2="{WIDTH - MARGIN["right"]}" y2="{z}" '
        f'stroke="#444" stroke-width="0.8"/>'
    )
    out += _polyline(ax, n, delta, "#1f77b4", "effect")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def day_of_year(d: dt.date) -> int:
    return d.timetuple().tm_yday
