"""Deterministic synthetic revision logs and mobility series with known ground truth.

Randomness comes from numpy's Philox counter-based generator keyed on
``(seed, language, stream)``, which gives the same streams on every
platform.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence
from zoneinfo import ZoneInfo

import numpy as np

from .dump import COLUMNS, RevisionEvent, UserKind, format_event
from .metrics import MetricKind, MetricSeries
from .mobility import DailySeries
from .profiles import LanguageProfile

_STREAM_COUNTS = 0
_STREAM_EVENTS = 1
_STREAM_MOBILITY = 2


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for one keyed stream."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)])))


@dataclass(frozen=True)
class ShockSpec:
    start_date: dt.date
    end_date: dt.date
    multiplier: float
    affected_languages: frozenset = frozenset()

    def __post_init__(self):
        if not self.multiplier > 0:
            raise ValueError("multiplier must be positive")
        if self.start_date > self.end_date:
            raise ValueError("shock start after end")
        object.__setattr__(self, "affected_languages", frozenset(self.affected_languages))

    @property
    def log_effect(self) -> float:
        return math.log(self.multiplier)

    def factor(self, language: str, d: dt.date) -> float:
        if language in self.affected_languages and self.start_date <= d <= self.end_date:
            return self.multiplier
        return 1.0


@dataclass(frozen=True)
class SynthConfig:
    """Generator parameters.

    ``intensity`` maps language code to the mean number of non-bot edits per
    day. ``newcomer_rate`` is the expected number of first-time registered
    editors per day; ``anonymous_fraction`` the share of non-bot edits made
    anonymously.
    """

    seed: int = 0
    intensity: Mapping[str, float] = field(default_factory=lambda: {"xx": 100.0})
    newcomer_rate: float = 2.0
    revert_probability: float = 0.05
    bot_fraction: float = 0.1
    anonymous_fraction: float = 0.3
    coverage: tuple[dt.date, dt.date] = (dt.date(2018, 1, 1), dt.date(2020, 12, 31))
    timezones: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        rates = [*self.intensity.values(), self.newcomer_rate, self.revert_probability, self.bot_fraction]
        if any(not (r >= 0) for r in rates):
            raise ValueError("rates must be non-negative")
        if not 0 <= self.anonymous_fraction <= 1 or self.revert_probability > 1:
            raise ValueError("probabilities must lie in [0, 1]")
        if self.coverage[0] > self.coverage[1]:
            raise ValueError("empty coverage")

    @property
    def languages(self) -> tuple[str, ...]:
        return tuple(self.intensity)

    @property
    def n_days(self) -> int:
        return (self.coverage[1] - self.coverage[0]).days + 1

    def dates(self) -> list[dt.date]:
        return [self.coverage[0] + dt.timedelta(days=i) for i in range(self.n_days)]


@dataclass
class GroundTruth:
    log_effect: float
    shock: ShockSpec | None
    edit_volume: dict[str, np.ndarray]
    newcomers: dict[str, np.ndarray] = field(default_factory=dict)
    bot_edits: dict[str, np.ndarray] = field(default_factory=dict)


def gen_daily_counts(config: SynthConfig, shock: ShockSpec | None = None) -> dict[str, np.ndarray]:
    """Poisson daily non-bot edit counts per language over the coverage."""
    dates = config.dates()
    out = {}
    for li, lang in enumerate(config.languages):
        lam = config.intensity[lang]
        mult = np.array([shock.factor(lang, d) if shock else 1.0 for d in dates])
        out[lang] = rng_for(config.seed, li, _STREAM_COUNTS).poisson(lam * mult)
    return out


def gen_count_series(
    config: SynthConfig, shock: ShockSpec | None = None, kind: str = MetricKind.EDIT_VOLUME.value
) -> dict[str, MetricSeries]:
    """Daily counts wrapped as metric series, skipping event expansion."""
    counts = gen_daily_counts(config, shock)
    return {
        lang: MetricSeries(lang, kind, config.coverage[0], c.astype(np.float64)) for lang, c in counts.items()
    }


def gen_revision_log(
    config: SynthConfig, shock: ShockSpec | None = None
) -> tuple[list[RevisionEvent], GroundTruth]:
    """Expand daily counts into individual events, sorted by UTC time per language.

    Each language's events are contiguous in the output, languages in
    ``config.intensity`` order.
    """
    counts = gen_daily_counts(config, shock)
    dates = config.dates()
    events: list[RevisionEvent] = []
    truth = GroundTruth(shock.log_effect if shock else 0.0, shock, counts)
    for li, lang in enumerate(config.languages):
        tz = config.timezones.get(lang, "UTC")
        evs, nc, bots = _expand_language(config, li, lang, tz, dates, counts[lang])
        events.extend(evs)
        truth.newcomers[lang] = nc
        truth.bot_edits[lang] = bots
    return events, truth


def _local_day_start(d: dt.date, zone) -> int:
    return int(dt.datetime(d.year, d.month, d.day, tzinfo=zone).timestamp())


def _expand_language(config, li, lang, tz, dates, counts):
    rng = rng_for(config.seed, li, _STREAM_EVENTS)
    zone = ZoneInfo(tz)
    next_uid = li * 10_000_000 + 1
    pool: list[int] = []
    page_pool = 1000
    newcomers = np.zeros(len(dates), dtype=np.int64)
    bots = np.zeros(len(dates), dtype=np.int64)
    events = []
    for di, d in enumerate(dates):
        n = int(counts[di])
        n_bot = int(rng.poisson(config.bot_fraction * config.intensity[lang])) if config.bot_fraction else 0
        bots[di] = n_bot
        total = n + n_bot
        if total == 0:
            continue
        lo = _local_day_start(d, zone)
        hi = _local_day_start(d + dt.timedelta(days=1), zone)
        secs = np.sort(rng.integers(lo, hi, size=total))
        is_bot = np.zeros(total, dtype=bool)
        is_bot[rng.choice(total, size=n_bot, replace=False)] = True
        anon = rng.random(total) < config.anonymous_fraction
        reverts = rng.random(total) < config.revert_probability
        deltas = rng.integers(-500, 1500, size=total)
        pages = rng.integers(1, page_pool + 1, size=total)
        n_registered = int(np.sum(~is_bot & ~anon))
        k_new = min(int(rng.poisson(config.newcomer_rate)), n_registered) if n_registered else 0
        if not pool:
            k_new = min(max(k_new, 1), n_registered)
        new_slots = set(rng.choice(n_registered, size=k_new, replace=False).tolist()) if k_new else set()
        # a few heavy editors per day so upper activity bands get populated
        heavy = pool[: 3] if pool else []
        reg_i = 0
        for j in range(total):
            if is_bot[j]:
                kind, uid = UserKind.BOT, 1
            elif anon[j]:
                kind, uid = UserKind.ANONYMOUS, None
            else:
                kind = UserKind.REGISTERED
                if reg_i in new_slots or not pool:
                    uid = next_uid
                    next_uid += 1
                    pool.append(uid)
                    newcomers[di] += 1
                elif heavy and rng.random() < 0.3:
                    uid = heavy[int(rng.integers(len(heavy)))]
                else:
                    uid = pool[int(rng.integers(len(pool)))]
                reg_i += 1
            events.append(
                RevisionEvent(
                    language=lang,
                    local_date=d,
                    user_kind=kind,
                    user_id=uid,
                    is_identity_revert=bool(reverts[j]),
                    byte_delta=int(deltas[j]),
                    page_id=int(pages[j]),
                    timestamp_utc=int(secs[j]),
                )
            )
    return events, newcomers, bots


def write_dump(path, events: Sequence[RevisionEvent], header: bool = False) -> None:
    """Serialize events to a dump TSV (plain text)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header:
            fh.write("\t".join(COLUMNS) + "\n")
        for i, ev in enumerate(events, 1):
            fh.write(format_event(ev, revision_id=i))
            fh.write("\n")


def gen_mobility(
    step_date: dt.date,
    step_size: float,
    noise_sd: float,
    seed: int,
    start: dt.date = dt.date(2020, 2, 15),
    n_days: int = 120,
    base_level: float = 0.0,
    extra_steps: Sequence[tuple[dt.date, float]] = (),
) -> DailySeries:
    """Piecewise-constant mobility (percent change) plus Gaussian noise."""
    mean = np.full(n_days, float(base_level))
    for d, size in ((step_date, step_size), *extra_steps):
        i = (d - start).days
        if 0 <= i < n_days:
            mean[i:] += size
    noise = rng_for(seed, 0, _STREAM_MOBILITY).normal(0.0, noise_sd, n_days) if noise_sd > 0 else 0.0
    return DailySeries(start, mean + noise)


def google_mobility_csv(series_by_country: Mapping[str, DailySeries], category: str = "workplaces") -> str:
    """Render series as a Google Community Mobility Reports CSV document."""
    from .mobility import CATEGORIES

    cols = [
        "country_region_code",
        "country_region",
        "sub_region_1",
        "sub_region_2",
        "metro_area",
        "iso_3166_2_code",
        "census_fips_code",
        "place_id",
        "date",
        *(c + "_percent_change_from_baseline" for c in CATEGORIES),
    ]
    lines = [",".join(cols)]
    for cc in sorted(series_by_country):
        s = series_by_country[cc]
        for i, v in enumerate(s.values.tolist()):
            cells = {c: "" for c in cols}
            cells.update(
                country_region_code=cc,
                country_region=cc,
                place_id=f"place-{cc}",
                date=s.date_at(i).isoformat(),
            )
            if not math.isnan(v):
                cells[category + "_percent_change_from_baseline"] = repr(round(v, 6))
            lines.append(",".join(cells[c] for c in cols))
    return "\n".join(lines) + "\n"


def profiles_for(config: SynthConfig) -> list[LanguageProfile]:
    return [LanguageProfile(code=lang, timezone=config.timezones.get(lang, "UTC")) for lang in config.languages]
