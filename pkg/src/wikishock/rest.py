"""Daily editors by activity level from the Wikimedia statistics REST API.

Responses are cached on disk, one JSON document per request key. Set
``WIKISHOCK_REST_BASE`` to point the client at another server (tests use a
local fixture server).
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import requests

from .metrics import BAND_API_SLUGS, BAND_LABELS, DailyMetrics

log = logging.getLogger(__name__)

DEFAULT_BASE = "https://wikimedia.org/api/rest_v1"
BASE_ENV = "WIKISHOCK_REST_BASE"
USER_AGENT = "wikishock/0.1 (research pipeline; daily editor counts)"


class FetchError(RuntimeError):
    pass


def band_slug(band) -> str:
    """Accept ``0..3``, ``"1_4"``-style labels or API slugs."""
    if isinstance(band, int):
        return BAND_API_SLUGS[band]
    if band in BAND_API_SLUGS:
        return band
    if band in BAND_LABELS:
        return BAND_API_SLUGS[BAND_LABELS.index(band)]
    raise ValueError(f"unknown activity band {band!r}")


@dataclass(frozen=True)
class ApiEditorPoint:
    language: str
    band: str
    date: dt.date
    count: int

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("negative editor count")
        if self.band not in BAND_API_SLUGS:
            raise ValueError(f"unknown band {self.band!r}")


class RateLimiter:
    """At most ``rate`` acquisitions per second, shared across threads."""

    def __init__(self, rate: float, clock=time.monotonic, sleep=time.sleep):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.interval = 1.0 / rate
        self.clock = clock
        self.sleep = sleep
        self._next = None
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            now = self.clock()
            if self._next is not None and now < self._next:
                self.sleep(self._next - now)
                now = self._next
            self._next = now + self.interval


class EditorsClient:
    def __init__(
        self,
        cache_dir,
        base_url: str | None = None,
        requests_per_second: float = 5.0,
        refresh: bool = False,
        session: requests.Session | None = None,
        timeout: float = 30.0,
        limiter: RateLimiter | None = None,
    ):
        self.cache_dir = Path(cache_dir)
        self.base_url = (base_url or os.environ.get(BASE_ENV) or DEFAULT_BASE).rstrip("/")
        self.refresh = refresh
        self.session = session or requests.Session()
        self.session.headers["User-Agent"] = USER_AGENT
        self.timeout = timeout
        self.limiter = limiter or RateLimiter(requests_per_second)
        self.requests_made = 0

    def _url(self, language: str, slug: str, start: dt.date, end: dt.date) -> str:
        stop = end + dt.timedelta(days=1)
        return (
            f"{self.base_url}/metrics/editors/aggregate/{language}.wikipedia.org/user/content/"
            f"{slug}/daily/{start:%Y%m%d}/{stop:%Y%m%d}"
        )

    def _cache_path(self, language, slug, start, end) -> Path:
        key = f"editors/aggregate|{language}|{slug}|{start.isoformat()}|{end.isoformat()}"
        digest = hashlib.sha256(key.encode()).hexdigest()[:24]
        return self.cache_dir / f"{language}-{digest}.json"

    def fetch_editors_by_activity(
        self, language: str, band, start: dt.date, end: dt.date
    ) -> list[ApiEditorPoint]:
        """Daily registered-editor counts in one activity band, ``start``..``end`` inclusive."""
        if end < start:
            return []
        slug = band_slug(band)
        path = self._cache_path(language, slug, start, end)
        if path.exists() and not self.refresh:
            doc = json.loads(path.read_text(encoding="utf-8"))
            return [ApiEditorPoint(language, slug, dt.date.fromisoformat(d), c) for d, c in doc["points"]]

        url = self._url(language, slug, start, end)
        self.limiter.acquire()
        self.requests_made += 1
        try:
            resp = self.session.get(url, timeout=self.timeout)
            resp.raise_for_status()
            body = resp.json()
        except (requests.RequestException, ValueError) as exc:
            raise FetchError(f"{url}: {exc}") from exc

        by_date = {}
        for item in body.get("items", []):
            for r in item.get("results", []):
                d = dt.date.fromisoformat(r["timestamp"][:10])
                by_date[d] = int(r["editors"])
        wanted = [start + dt.timedelta(days=i) for i in range((end - start).days + 1)]
        missing = [d for d in wanted if d not in by_date]
        if missing:
            shown = ", ".join(d.isoformat() for d in missing[:10])
            raise FetchError(f"{url}: response lacks {len(missing)} dates ({shown})")
        points = [ApiEditorPoint(language, slug, d, by_date[d]) for d in wanted]
        _atomic_write_json(
            path,
            {
                "endpoint": "metrics/editors/aggregate",
                "language": language,
                "band": slug,
                "start": start.isoformat(),
                "end": end.isoformat(),
                "points": [[p.date.isoformat(), p.count] for p in points],
            },
        )
        return points


def _atomic_write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True)
class BandDifference:
    date: dt.date
    band: str
    api: int
    dump: int

    @property
    def abs_diff(self) -> int:
        return self.api - self.dump

    @property
    def rel_diff(self) -> float | None:
        return None if self.dump == 0 else (self.api - self.dump) / self.dump


@dataclass
class DiscrepancyReport:
    rows: list[BandDifference]

    def summary(self) -> dict[str, dict[str, float]]:
        """Quantiles (0, .25, .5, .75, 1) of the absolute difference per band."""
        out = {}
        for band in sorted({r.band for r in self.rows}):
            diffs = np.array([r.abs_diff for r in self.rows if r.band == band], dtype=np.float64)
            q = np.quantile(diffs, [0.0, 0.25, 0.5, 0.75, 1.0])
            out[band] = dict(zip(("min", "q25", "median", "q75", "max"), map(float, q)))
        return out

    def to_json(self) -> dict:
        return {
            "summary": self.summary(),
            "rows": [
                {
                    "date": r.date.isoformat(),
                    "band": r.band,
                    "api": r.api,
                    "dump": r.dump,
                    "abs_diff": r.abs_diff,
                    "rel_diff": r.rel_diff,
                }
                for r in self.rows
            ],
        }


def compare_band_sources(api_points: Sequence[ApiEditorPoint], dump_series: Sequence[DailyMetrics]) -> DiscrepancyReport:
    """Per-date API minus dump differences over the overlapping dates."""
    dump = {m.date: m.editors_band for m in dump_series}
    rows = []
    for p in sorted(api_points, key=lambda p: (p.date, BAND_API_SLUGS.index(p.band))):
        bands = dump.get(p.date)
        if bands is None:
            continue
        rows.append(BandDifference(p.date, p.band, p.count, bands[BAND_API_SLUGS.index(p.band)]))
    return DiscrepancyReport(rows)
