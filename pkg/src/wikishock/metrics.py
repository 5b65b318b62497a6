"""Daily activity metrics, smoothing and monthly outlier replacement."""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .dump import RevisionEvent, UserKind

BAND_EDGES = (1, 5, 25, 100)
BAND_LABELS = ("1_4", "5_24", "25_99", "100plus")
BAND_API_SLUGS = ("1..4-edits", "5..24-edits", "25..99-edits", "100..-edits")


class MetricKind(str, enum.Enum):
    EDIT_VOLUME = "edit_volume"
    NEWCOMERS = "newcomers"
    IDENTITY_REVERTS = "identity_reverts"
    REVERT_RATE = "revert_rate"
    EDITORS_1_4 = "editors_1_4"
    EDITORS_5_24 = "editors_5_24"
    EDITORS_25_99 = "editors_25_99"
    EDITORS_100PLUS = "editors_100plus"
    BYTE_DELTA = "byte_delta_sum"

    @property
    def is_count(self) -> bool:
        return self not in (MetricKind.REVERT_RATE, MetricKind.BYTE_DELTA)


BAND_KINDS = (
    MetricKind.EDITORS_1_4,
    MetricKind.EDITORS_5_24,
    MetricKind.EDITORS_25_99,
    MetricKind.EDITORS_100PLUS,
)


def band_index(daily_edits: int) -> int:
    """Activity band (0..3) for an editor's number of edits on one day."""
    if daily_edits < 1:
        raise ValueError("an active editor has at least one edit")
    if daily_edits >= 100:
        return 3
    if daily_edits >= 25:
        return 2
    if daily_edits >= 5:
        return 1
    return 0


class OrderingError(ValueError):
    """Events went backwards in time beyond the allowed tolerance."""


@dataclass(frozen=True)
class DailyMetrics:
    date: dt.date
    edit_volume: int = 0
    newcomers: int = 0
    identity_reverts: int = 0
    editors_band: tuple[int, int, int, int] = (0, 0, 0, 0)
    byte_delta_sum: int = 0

    @property
    def revert_rate(self) -> float | None:
        if self.edit_volume == 0:
            return None
        return self.identity_reverts / self.edit_volume

    @property
    def active_editors(self) -> int:
        return sum(self.editors_band)

    def value(self, kind: MetricKind) -> float:
        if kind is MetricKind.REVERT_RATE:
            r = self.revert_rate
            return math.nan if r is None else r
        if kind in BAND_KINDS:
            return float(self.editors_band[BAND_KINDS.index(kind)])
        return float(getattr(self, kind.value))


class _DayAccumulator:
    __slots__ = ("date", "edits", "newcomers", "reverts", "bytes", "per_user")

    def __init__(self, date):
        self.date = date
        self.edits = 0
        self.newcomers = 0
        self.reverts = 0
        self.bytes = 0
        self.per_user = {}

    def finish(self) -> DailyMetrics:
        bands = [0, 0, 0, 0]
        for n in self.per_user.values():
            bands[band_index(n)] += 1
        return DailyMetrics(
            date=self.date,
            edit_volume=self.edits,
            newcomers=self.newcomers,
            identity_reverts=self.reverts,
            editors_band=tuple(bands),
            byte_delta_sum=self.bytes,
        )


def _date_range(start: dt.date, end: dt.date):
    d = start
    one = dt.timedelta(days=1)
    while d <= end:
        yield d
        d += one


def aggregate_daily(
    events: Iterable[RevisionEvent],
    coverage: tuple[dt.date, dt.date] | None = None,
    ordering_tolerance: int = 0,
    seen_users: set | None = None,
) -> list[DailyMetrics]:
    """Fold a chronologically sorted event stream into gap-free daily metrics.

    Parameters
    ----------
    events
        Events of a single language, sorted by UTC timestamp.
    coverage
        Inclusive ``(first, last)`` date range to emit. Events before the
        range still feed the newcomer seen-set. Defaults to the span of the
        events.
    ordering_tolerance
        Seconds a timestamp may step backwards before :class:`OrderingError`.
    seen_users
        Registered users already known to have edited (carried across dump
        files); updated in place.

    Returns
    -------
    list of DailyMetrics
        One entry per covered date, zeros on dates without events.
    """
    seen = set() if seen_users is None else seen_users
    days: dict[dt.date, DailyMetrics] = {}
    # days still open to late events (only more than one with a tolerance)
    open_days: dict[dt.date, _DayAccumulator] = {}
    horizon = dt.timedelta(days=ordering_tolerance // 86400 + 1)
    cur: _DayAccumulator | None = None
    last_ts = None
    for ev in events:
        ts = ev.timestamp_utc
        if last_ts is not None and ts < last_ts - ordering_tolerance:
            raise OrderingError(
                f"timestamp {ts} precedes {last_ts} by more than {ordering_tolerance}s; "
                "newcomer detection needs chronological input"
            )
        if last_ts is None or ts > last_ts:
            last_ts = ts
        if cur is None or ev.local_date != cur.date:
            cur = open_days.get(ev.local_date)
            if cur is None:
                if ev.local_date in days:
                    raise OrderingError(f"events for {ev.local_date} are not contiguous in the stream")
                cur = open_days[ev.local_date] = _DayAccumulator(ev.local_date)
                for d in [d for d in open_days if d < ev.local_date - horizon]:
                    days[d] = open_days.pop(d).finish()
        if ev.is_identity_revert:
            cur.reverts += 1
        cur.bytes += ev.byte_delta
        kind = ev.user_kind
        if kind is UserKind.BOT:
            continue
        cur.edits += 1
        if kind is UserKind.REGISTERED:
            uid = ev.user_id
            if uid not in seen:
                seen.add(uid)
                cur.newcomers += 1
            cur.per_user[uid] = cur.per_user.get(uid, 0) + 1
    for d, acc in open_days.items():
        days[d] = acc.finish()

    if coverage is None:
        if not days:
            return []
        coverage = (min(days), max(days))
    first, last = coverage
    return [days.get(d) or DailyMetrics(date=d) for d in _date_range(first, last)]


@dataclass(frozen=True)
class MetricSeries:
    """Gap-free daily series starting at ``start``.

    Undefined values (revert rate on zero-edit days) are NaN.
    """

    language: str
    kind: str
    start: dt.date
    values: np.ndarray
    outlier_flags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))

    def __len__(self):
        return int(self.values.shape[0])

    @property
    def end(self) -> dt.date:
        return self.start + dt.timedelta(days=len(self) - 1)

    @property
    def dates(self) -> list[dt.date]:
        return [self.start + dt.timedelta(days=i) for i in range(len(self))]

    def index_of(self, d: dt.date) -> int:
        return (d - self.start).days

    def covers(self, d: dt.date) -> bool:
        return 0 <= (d - self.start).days < len(self)

    def at(self, d: dt.date) -> float:
        i = self.index_of(d)
        if not 0 <= i < len(self):
            raise KeyError(d)
        return float(self.values[i])

    def items(self):
        return zip(self.dates, self.values.tolist())

    def slice(self, first: dt.date, last: dt.date) -> MetricSeries:
        i = max(0, self.index_of(first))
        j = min(len(self), self.index_of(last) + 1)
        j = max(i, j)
        return replace(self, start=self.start + dt.timedelta(days=i), values=self.values[i:j])


def series_from_daily(language: str, daily: Sequence[DailyMetrics], kind: MetricKind | str) -> MetricSeries:
    kind = MetricKind(kind)
    if not daily:
        return MetricSeries(language, kind.value, dt.date(1970, 1, 1), np.empty(0))
    return MetricSeries(language, kind.value, daily[0].date, np.array([m.value(kind) for m in daily]))


def rolling_mean(series: MetricSeries, window: int = 7) -> MetricSeries:
    """Trailing ``window``-day mean; the first ``window - 1`` dates are dropped."""
    if window < 1:
        raise ValueError("window must be >= 1")
    out = kernels.rolling_mean(series.values, window)
    return MetricSeries(
        series.language,
        series.kind,
        series.start + dt.timedelta(days=window - 1),
        out,
        frozenset(),
    )


def _mad_pass(values: np.ndarray, k: float) -> np.ndarray:
    """Indices (into ``values``) of single-pass outliers."""
    finite = ~np.isnan(values)
    if not finite.any():
        return np.empty(0, dtype=np.intp)
    x = values[finite]
    med = float(np.median(x))
    mad = float(np.median(np.abs(x - med)))
    dev = np.abs(values - med)
    with np.errstate(invalid="ignore"):
        out = finite & (dev > k * mad)
    return np.flatnonzero(out)


def _mad_month(orig: np.ndarray, k: float) -> tuple[np.ndarray, float]:
    """Fixed point of the MAD policy on one month.

    Replaced entries take the median of the entries kept so far, which
    leaves the overall median where it was; outliers are then looked for
    again in the updated month. The replaced set only grows, so this ends
    after at most ``len(orig)`` rounds. Returns the replaced indices and
    their common value.
    """
    replaced = np.zeros(orig.shape[0], dtype=bool)
    current = orig
    fill = math.nan
    while True:
        new = _mad_pass(current, k)
        new = new[~replaced[new]]
        if new.size == 0:
            return np.flatnonzero(replaced), fill
        replaced[new] = True
        kept = orig[~replaced]
        kept = kept[~np.isnan(kept)]
        if kept.size == 0:
            # ties at the fill value swamped the month; it is constant now
            return np.flatnonzero(replaced), fill
        fill = float(np.median(kept))
        current = orig.copy()
        current[replaced] = fill


def monthly_mad_replace(series: MetricSeries, k: float = 5.0) -> MetricSeries:
    """Replace values further than ``k`` MADs from their calendar-month median.

    The median absolute deviation is unscaled. Replaced dates are added to
    ``outlier_flags``. Detection repeats on a month until nothing more is
    flagged, which makes the operation idempotent; for almost all data the
    first round already settles it.
    """
    if not k > 0:
        raise ValueError("k must be positive")
    values = series.values.copy()
    flags = set(series.outlier_flags)
    dates = series.dates
    month_of = np.array([d.year * 12 + d.month - 1 for d in dates], dtype=np.int64)
    if len(dates):
        bounds = np.flatnonzero(np.diff(month_of)) + 1
        starts = np.concatenate(([0], bounds))
        ends = np.concatenate((bounds, [len(dates)]))
    else:
        starts = ends = np.empty(0, dtype=np.int64)
    for lo, hi in zip(starts.tolist(), ends.tolist()):
        orig = values[lo:hi].copy()
        idx, fill = _mad_month(orig, k)
        if idx.size:
            values[lo + idx] = fill
            flags.update(dates[lo + i] for i in idx.tolist())
    return MetricSeries(series.language, series.kind, series.start, values, frozenset(flags))


# -- CSV ---------------------------------------------------------------------

CSV_COLUMNS = (
    "date",
    "edit_volume",
    "newcomers",
    "identity_reverts",
    "revert_rate",
    "editors_1_4",
    "editors_5_24",
    "editors_25_99",
    "editors_100plus",
    "byte_delta_sum",
    "outlier_replaced",
)

FLAGGED_KINDS = (
    MetricKind.EDIT_VOLUME,
    MetricKind.NEWCOMERS,
    MetricKind.REVERT_RATE,
    *BAND_KINDS,
    MetricKind.BYTE_DELTA,
)


def outlier_flags_by_date(language: str, daily: Sequence[DailyMetrics], k: float = 5.0) -> dict[dt.date, list[str]]:
    """Metrics whose value on each date the monthly MAD policy would replace."""
    out: dict[dt.date, list[str]] = {}
    for kind in FLAGGED_KINDS:
        s = monthly_mad_replace(series_from_daily(language, daily, kind), k)
        for d in sorted(s.outlier_flags):
            out.setdefault(d, []).append(kind.value)
    return out


def write_metrics_csv(fh: io.TextIOBase, language: str, daily: Sequence[DailyMetrics], k: float = 5.0) -> None:
    flags = outlier_flags_by_date(language, daily, k)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for m in daily:
        rr = m.revert_rate
        w.writerow(
            (
                m.date.isoformat(),
                m.edit_volume,
                m.newcomers,
                m.identity_reverts,
                "" if rr is None else repr(rr),
                *m.editors_band,
                m.byte_delta_sum,
                ";".join(flags.get(m.date, ())),
            )
        )


def read_metrics_csv(path) -> list[DailyMetrics]:
    """Read a metrics CSV back into :class:`DailyMetrics` (flags are recomputed downstream)."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.DictReader(fh)
        missing = [c for c in CSV_COLUMNS[:-1] if c not in (r.fieldnames or ())]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        for row in r:
            out.append(
                DailyMetrics(
                    date=dt.date.fromisoformat(row["date"]),
                    edit_volume=int(row["edit_volume"]),
                    newcomers=int(row["newcomers"]),
                    identity_reverts=int(row["identity_reverts"]),
                    editors_band=tuple(int(row[f"editors_{b}"]) for b in BAND_LABELS),
                    byte_delta_sum=int(row["byte_delta_sum"]),
                )
            )
    return out
