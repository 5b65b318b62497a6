"""Mobility reports and changepoint detection.

Mobility values are percent changes from the pre-pandemic baseline, so the
baseline level is zero by construction.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .profiles import ChangepointPair, LanguageProfile

log = logging.getLogger(__name__)

CATEGORIES = (
    "retail_and_recreation",
    "grocery_and_pharmacy",
    "parks",
    "transit_stations",
    "workplaces",
    "residential",
)
_SUFFIX = "_percent_change_from_baseline"
_REGION_COLUMNS = ("sub_region_1", "sub_region_2", "metro_area")


class MobilityFormatError(ValueError):
    pass


class ChangepointNotFound(LookupError):
    pass


@dataclass(frozen=True)
class MobilityObservation:
    country: str
    date: dt.date
    pct_change: dict = field(hash=False)


@dataclass(frozen=True)
class DailySeries:
    """Date-indexed daily values; NaN marks days without data."""

    start: dt.date
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))

    def __len__(self):
        return int(self.values.shape[0])

    @property
    def end(self) -> dt.date:
        return self.start + dt.timedelta(days=len(self) - 1)

    def date_at(self, i: int) -> dt.date:
        return self.start + dt.timedelta(days=int(i))

    def index_of(self, d: dt.date) -> int:
        return (d - self.start).days

    def at(self, d: dt.date) -> float:
        return float(self.values[self.index_of(d)])


def load_google_mobility(path, countries: Sequence[str] | None = None) -> list[MobilityObservation]:
    """Country-level rows of a Google Community Mobility Reports CSV.

    Rows with any sub-region or metro field set are dropped. Empty category
    cells leave that category out of ``pct_change``.
    """
    wanted = set(countries) if countries is not None else None
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise MobilityFormatError(f"{path}: missing header")
        pos = {name: i for i, name in enumerate(header)}
        for need in ("country_region_code", "date"):
            if need not in pos:
                raise MobilityFormatError(f"{path}: header lacks {need!r}")
        cats = [(c, pos[c + _SUFFIX]) for c in CATEGORIES if c + _SUFFIX in pos]
        if not cats:
            raise MobilityFormatError(f"{path}: no *{_SUFFIX} columns")
        regions = [pos[c] for c in _REGION_COLUMNS if c in pos]
        i_cc, i_date = pos["country_region_code"], pos["date"]
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(header):
                log.warning("%s:%d: wrong field count, row skipped", path, lineno)
                continue
            if any(row[i] for i in regions):
                continue
            cc = row[i_cc]
            if wanted is not None and cc not in wanted:
                continue
            vals = {}
            for name, i in cats:
                cell = row[i]
                if cell == "":
                    continue
                v = float(cell)
                if math.isfinite(v):
                    vals[name] = v
            out.append(MobilityObservation(cc, dt.date.fromisoformat(row[i_date]), vals))
    return out


def aggregate_weighted(
    observations: Sequence[MobilityObservation],
    profile: LanguageProfile,
    category: str = "workplaces",
) -> DailySeries:
    """Population-weighted mobility for one language.

    On a date where some countries lack data the remaining weights are
    renormalized (with a warning); dates without any data are NaN.
    """
    weights = profile.country_weights()
    by_date: dict[dt.date, dict[str, float]] = {}
    for ob in observations:
        if ob.country in weights and category in ob.pct_change:
            by_date.setdefault(ob.date, {})[ob.country] = ob.pct_change[category]
    if not by_date:
        return DailySeries(dt.date(2020, 1, 1), np.empty(0))
    first, last = min(by_date), max(by_date)
    n = (last - first).days + 1
    values = np.full(n, np.nan)
    partial = 0
    for d, row in by_date.items():
        w = sum(weights[c] for c in row)
        if len(row) < len(weights):
            partial += 1
        values[(d - first).days] = sum(weights[c] * v for c, v in sorted(row.items())) / w
    if partial:
        log.warning("%s: %d dates with missing countries; weights renormalized", profile.code, partial)
    return DailySeries(first, values)


def smooth_centered(series: DailySeries, window: int = 7) -> DailySeries:
    """Centered rolling mean (trailing mean relabelled by half a window).

    Centering keeps a step at its original date instead of lagging it by
    ``(window - 1) / 2`` days. ``window`` must be odd.
    """
    if window % 2 != 1:
        raise ValueError("centered smoothing needs an odd window")
    out = kernels.rolling_mean(series.values, window)
    return DailySeries(series.start + dt.timedelta(days=(window - 1) // 2), out)


def fill_interior_gaps(series: DailySeries) -> DailySeries:
    """Trim leading/trailing NaN and linearly interpolate interior ones."""
    x = series.values
    ok = ~np.isnan(x)
    if not ok.any():
        return DailySeries(series.start, np.empty(0))
    lo, hi = int(np.flatnonzero(ok)[0]), int(np.flatnonzero(ok)[-1]) + 1
    x = x[lo:hi].copy()
    gaps = np.isnan(x)
    if gaps.any():
        idx = np.arange(x.shape[0])
        x[gaps] = np.interp(idx[gaps], idx[~gaps], x[~gaps])
        log.warning("interpolated %d missing mobility days", int(gaps.sum()))
    return DailySeries(series.date_at(lo), x)


def _min_gain(x: np.ndarray) -> float:
    mean = float(np.mean(x))
    sse = float(np.sum((x - mean) ** 2))
    return max(1e-12 * sse, x.shape[0] * (1e-9 * (1.0 + abs(mean))) ** 2)


def binary_segment(series, max_changepoints: int = 4, min_segment: int = 7) -> list[int]:
    """Greedy binary segmentation under an L2 (squared error) cost.

    At each step every current segment proposes its best split; the split
    with the largest cost reduction is accepted (earliest index on ties).
    Stops after ``max_changepoints`` splits or when no split reduces the
    cost. Indices mark the first position of each new segment.
    """
    x = np.asarray(series, dtype=np.float64)
    if np.isnan(x).any():
        raise ValueError("binary_segment needs a series without gaps")
    n = x.shape[0]
    min_segment = max(1, int(min_segment))
    if n < 2 * min_segment or max_changepoints < 1:
        return []
    floor = _min_gain(x)
    segments = [(0, n)]
    proposals = {(0, n): kernels.best_split(x, 0, n, min_segment)}
    cps: list[int] = []
    while len(cps) < max_changepoints:
        best = None
        for seg in segments:
            idx, gain = proposals[seg]
            if idx < 0 or gain <= floor:
                continue
            if best is None or gain > best[2]:
                best = (seg, idx, gain)
        if best is None:
            break
        (lo, hi), idx, _ = best
        i = segments.index((lo, hi))
        segments[i : i + 1] = [(lo, idx), (idx, hi)]
        del proposals[(lo, hi)]
        for seg in ((lo, idx), (idx, hi)):
            proposals[seg] = kernels.best_split(x, seg[0], seg[1], min_segment)
        cps.append(idx)
    return sorted(cps)


def segment_cost(x, changepoints: Sequence[int]) -> float:
    """Total within-segment squared deviation for the given split points."""
    x = np.asarray(x, dtype=np.float64)
    bounds = [0, *changepoints, x.shape[0]]
    total = 0.0
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        seg = x[lo:hi]
        total += float(np.sum((seg - seg.mean()) ** 2))
    return total


def detect_mobility_changepoint(
    series: DailySeries,
    search_window: tuple[dt.date, dt.date] = (dt.date(2020, 2, 1), dt.date(2020, 5, 31)),
    max_changepoints: int = 4,
    min_segment: int = 7,
) -> dt.date:
    """Date of the largest downward mean shift among detected changepoints.

    ``series`` is expected to be smoothed already. Raises
    :class:`ChangepointNotFound` when no downward changepoint falls inside
    ``search_window``.
    """
    x = series.values
    finite = np.flatnonzero(~np.isnan(x))
    if finite.size == 0:
        raise ChangepointNotFound("empty mobility series")
    lo, hi = int(finite[0]), int(finite[-1]) + 1
    if np.isnan(x[lo:hi]).any():
        raise ValueError("mobility series has interior gaps")
    seg = x[lo:hi]
    cps = binary_segment(seg, max_changepoints, min_segment)
    bounds = [0, *cps, seg.shape[0]]
    best = None
    for k, cp in enumerate(cps, 1):
        d = series.date_at(lo + cp)
        if not search_window[0] <= d <= search_window[1]:
            continue
        shift = float(seg[cp : bounds[k + 1]].mean() - seg[bounds[k - 1] : cp].mean())
        if shift < 0 and (best is None or shift < best[1]):
            best = (d, shift)
    if best is None:
        raise ChangepointNotFound("no downward changepoint in search window")
    return best[0]


def detect_normality_changepoint(
    series: DailySeries,
    mobility_date: dt.date,
    baseline: float = 0.0,
    band: float = 0.10,
) -> dt.date | None:
    """Earliest date after ``mobility_date`` from which the mean of the rest
    of the series stays within ``baseline +/- band * 100`` percentage points.
    """
    x = series.values
    finite = np.flatnonzero(~np.isnan(x))
    if finite.size == 0:
        return None
    end = int(finite[-1]) + 1
    first = max(series.index_of(mobility_date) + 1, 0)
    if first >= end:
        return None
    tail = x[first:end]
    ok = ~np.isnan(tail)
    # suffix sums over observed days
    sums = np.cumsum(np.where(ok, tail, 0.0)[::-1])[::-1]
    counts = np.cumsum(ok[::-1])[::-1]
    half = band * 100.0
    for i in range(tail.shape[0]):
        if counts[i] == 0:
            break
        if abs(sums[i] / counts[i] - baseline) <= half:
            return series.date_at(first + i)
    return None


def detect_changepoints(
    observations: Sequence[MobilityObservation],
    profile: LanguageProfile,
    category: str = "workplaces",
    search_window: tuple[dt.date, dt.date] = (dt.date(2020, 2, 1), dt.date(2020, 5, 31)),
    max_changepoints: int = 4,
    min_segment: int = 7,
    band: float = 0.10,
    smoothing: int = 7,
) -> ChangepointPair:
    raw = aggregate_weighted(observations, profile, category)
    if len(raw) == 0:
        raise ChangepointNotFound(f"{profile.code}: no mobility data for {category}")
    raw = fill_interior_gaps(raw)
    smooth = smooth_centered(raw, smoothing) if smoothing > 1 else raw
    mob = detect_mobility_changepoint(smooth, search_window, max_changepoints, min_segment)
    norm = detect_normality_changepoint(smooth, mob, 0.0, band)
    return ChangepointPair(mob, norm)
