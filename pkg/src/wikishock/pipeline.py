"""Pipeline stages. Intermediate files are the contract between stages:

    out/metrics/<lang>.csv, out/metrics/ingest_report.json
    out/changepoints.json
    out/effects/<metric>.csv, out/did_report.json
    out/plots/<metric>/<lang>_series.svg, <lang>_effects.svg
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import itertools
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from . import svg
from .config import PipelineConfig
from .did import VARIANTS, EffectSeries, run_variant
from .dump import load_exclusion_list, open_dump_stream
from .metrics import (
    BAND_API_SLUGS,
    aggregate_daily,
    monthly_mad_replace,
    read_metrics_csv,
    rolling_mean,
    series_from_daily,
    write_metrics_csv,
)
from .mobility import ChangepointNotFound, detect_changepoints, load_google_mobility
from .profiles import ChangepointPair

log = logging.getLogger(__name__)

EFFECT_COLUMNS = (
    "metric",
    "language",
    "window_n",
    "delta",
    "se",
    "ci_lo",
    "ci_hi",
    "percent",
    "n_rows",
    "variant_label",
)


class MissingInputError(FileNotFoundError):
    pass


@dataclass
class StageResult:
    outputs: list[Path] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.errors)


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_text(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def metrics_path(out: Path, lang: str) -> Path:
    return out / "metrics" / f"{lang}.csv"


def effects_path(out: Path, metric: str) -> Path:
    return out / "effects" / f"{metric}.csv"


# -- ingest ------------------------------------------------------------------


def ingest_language(cfg: PipelineConfig, code: str, out: Path):
    """Aggregate every dump of one language; returns ``(daily, report)``."""
    profile = cfg.profile(code)
    excluded = frozenset()
    if profile.exclusion_list:
        excluded = load_exclusion_list(cfg.resolve(profile.exclusion_list))
    streams = [open_dump_stream(cfg.resolve(p), profile, excluded) for p in profile.dumps]
    seen: set = set()
    daily = aggregate_daily(
        itertools.chain.from_iterable(streams),
        coverage=cfg.coverage,
        ordering_tolerance=cfg.ordering_tolerance,
        seen_users=seen,
    )
    buf = io.StringIO()
    write_metrics_csv(buf, code, daily, cfg.mad_k)
    atomic_write_text(metrics_path(out, code), buf.getvalue())
    report = {
        "files": [{"path": str(p), **s.counters} for p, s in zip(profile.dumps, streams)],
        "days": len(daily),
        "events": sum(s.lines_read - s.records_skipped - s.parse_errors for s in streams),
        "registered_editors_seen": len(seen),
    }
    return daily, report


def run_ingest(cfg: PipelineConfig, out: Path, refresh: bool = False) -> StageResult:
    res = StageResult()
    report = {"snapshot": cfg.snapshot, "languages": {}}
    for code in cfg.language_codes:
        daily, rep = ingest_language(cfg, code, out)
        report["languages"][code] = rep
        res.outputs.append(metrics_path(out, code))
        if cfg.rest_enabled and daily:
            try:
                res.outputs.append(_band_crosscheck(cfg, code, daily, out, refresh))
            except Exception as exc:  # noqa: BLE001 - cross-check is advisory
                res.errors.append(f"{code}: band cross-check failed: {exc}")
    atomic_write_text(out / "metrics" / "ingest_report.json", _json_text(report))
    res.outputs.append(out / "metrics" / "ingest_report.json")
    return res


def _band_crosscheck(cfg, code, daily, out, refresh) -> Path:
    from .rest import EditorsClient, compare_band_sources

    client = EditorsClient(cfg.resolve(cfg.cache_dir), requests_per_second=cfg.rest_rate, refresh=refresh)
    points = []
    for slug in BAND_API_SLUGS:
        points += client.fetch_editors_by_activity(code, slug, daily[0].date, daily[-1].date)
    path = out / "metrics" / f"band_discrepancy_{code}.json"
    atomic_write_text(path, _json_text(compare_band_sources(points, daily).to_json()))
    return path


# -- changepoints ------------------------------------------------------------


def run_changepoints(cfg: PipelineConfig, out: Path) -> StageResult:
    res = StageResult()
    entries = []
    need_detection = [p for p in cfg.languages if p.changepoint_override is None]
    observations = None
    if need_detection:
        if cfg.mobility_csv is None:
            observations = []
        else:
            path = cfg.resolve(cfg.mobility_csv)
            if not path.exists():
                raise MissingInputError(f"mobility CSV not found: {path}")
            countries = {cc for p in need_detection for cc, _ in p.mobility_countries}
            observations = load_google_mobility(path, countries)
    for p in cfg.languages:
        base = {"language": p.code, "category": cfg.mobility_category}
        if p.changepoint_override is not None:
            entries.append({**base, **p.changepoint_override.to_json(), "method": "override"})
            continue
        try:
            if not p.mobility_countries:
                raise ChangepointNotFound("no mobility countries configured")
            pair = detect_changepoints(
                observations,
                p,
                category=cfg.mobility_category,
                search_window=cfg.search_window,
                max_changepoints=cfg.max_changepoints,
                min_segment=cfg.min_segment,
                band=cfg.normality_band,
                smoothing=cfg.mobility_smoothing,
            )
        except (ChangepointNotFound, ValueError) as exc:
            entries.append({**base, "method": "error", "error": str(exc)})
            res.errors.append(f"{p.code}: {exc}")
            continue
        entries.append({**base, **pair.to_json(), "method": "detected"})
    path = out / "changepoints.json"
    atomic_write_text(path, _json_text({"changepoints": entries}))
    res.outputs.append(path)
    return res


def read_changepoints(out: Path) -> dict[str, ChangepointPair]:
    path = out / "changepoints.json"
    if not path.exists():
        raise MissingInputError(f"missing input: {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    return {
        e["language"]: ChangepointPair.from_json(e)
        for e in doc["changepoints"]
        if e.get("method") != "error"
    }


# -- did ---------------------------------------------------------------------


def load_series(cfg: PipelineConfig, out: Path, codes, metric: str, clean: bool = True):
    missing = [str(metrics_path(out, c)) for c in codes if not metrics_path(out, c).exists()]
    if missing:
        raise MissingInputError("missing inputs: " + ", ".join(missing))
    series = {}
    for c in codes:
        s = series_from_daily(c, read_metrics_csv(metrics_path(out, c)), metric)
        series[c] = monthly_mad_replace(s, cfg.mad_k) if clean else s
    return series


def run_did(cfg: PipelineConfig, out: Path, variants=None) -> StageResult:
    res = StageResult()
    cps = read_changepoints(out)
    codes = [c for c in cfg.language_codes if c in cps]
    for c in cfg.language_codes:
        if c not in cps:
            res.errors.append(f"{c}: no mobility changepoint; language left out of the regression")
    if len(codes) < 2:
        raise MissingInputError("need changepoints for at least two languages")
    variants = list(variants or ("base", *cfg.robustness))
    b = cfg.baseline_index(codes)
    report = {"baseline_language": codes[b], "languages": codes, "missing_windows": {}}
    for metric in cfg.metrics:
        series = load_series(cfg, out, codes, metric)
        by_variant: dict[str, dict[str, EffectSeries]] = {}
        for v in variants:
            by_variant[v] = run_variant(
                v,
                series,
                {c: cps[c].mobility_date for c in codes},
                metric,
                window_len=cfg.window_len,
                languages=codes,
                baseline=b,
                n_windows=cfg.n_windows,
                baseline_len=cfg.baseline_len,
                transform=cfg.transform_for(metric),
                treated_year=cfg.treated_year,
                control_years=cfg.control_years,
            )
            missing = next(iter(by_variant[v].values())).missing
            if missing:
                report["missing_windows"].setdefault(metric, {})[v] = {
                    str(n): msg for n, msg in sorted(missing.items())
                }
                res.errors.append(f"{metric}/{v}: {len(missing)} windows aborted")
        path = effects_path(out, metric)
        as_percent = cfg.transform_for(metric) != "identity"
        atomic_write_text(path, effects_csv(metric, codes, variants, by_variant, as_percent))
        res.outputs.append(path)
    atomic_write_text(out / "did_report.json", _json_text(report))
    res.outputs.append(out / "did_report.json")
    return res


def effects_csv(metric, codes, variants, by_variant, as_percent=True) -> str:
    """Effects table; ``percent`` is left empty for untransformed (additive) metrics."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EFFECT_COLUMNS)
    order = sorted(variants, key=lambda v: VARIANTS.index(v))
    for lang in codes:
        rows = []
        for v in order:
            for r in by_variant[v][lang].records:
                rows.append((r.n, VARIANTS.index(v), r, v))
        for n, _, r, v in sorted(rows, key=lambda t: (t[0], t[1])):
            w.writerow(
                (metric, lang, n, repr(r.delta), repr(r.se), repr(r.ci_lo), repr(r.ci_hi),
                 repr(r.percent) if as_percent else "", r.n_rows, v)
            )
    return buf.getvalue()


def read_effects_csv(path):
    """Rows of an effects CSV grouped as ``{(language, variant): [(n, delta, se), ...]}``."""
    out: dict[tuple[str, str], list[tuple[int, float, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.setdefault((row["language"], row["variant_label"]), []).append(
                (int(row["window_n"]), float(row["delta"]), float(row["se"]))
            )
    return out


# -- plot --------------------------------------------------------------------


def run_plot(cfg: PipelineConfig, out: Path) -> StageResult:
    res = StageResult()
    codes = cfg.language_codes
    needed = [metrics_path(out, c) for c in codes] + [out / "changepoints.json"]
    needed += [effects_path(out, m) for m in cfg.metrics]
    missing = [str(p) for p in needed if not p.exists()]
    if missing:
        raise MissingInputError("missing inputs: " + ", ".join(missing))
    cps = read_changepoints(out)
    years = sorted({*cfg.control_years, cfg.treated_year})
    for metric in cfg.metrics:
        raw = load_series(cfg, out, codes, metric, clean=False)
        effects = read_effects_csv(effects_path(out, metric))
        for c in codes:
            smooth = rolling_mean(raw[c], 7)
            by_year = {}
            for y in years:
                first = dt.date(y, 1, 1)
                last = dt.date(y, *cfg.plot_until)
                part = smooth.slice(first, last)
                by_year[y] = ([float(svg.day_of_year(d)) for d in part.dates], part.values.tolist())
            markers = []
            if c in cps:
                markers.append(("mobility", float(svg.day_of_year(cps[c].mobility_date))))
                if cps[c].normality_date:
                    markers.append(("normality", float(svg.day_of_year(cps[c].normality_date))))
            p = out / "plots" / metric / f"{c}_series.svg"
            atomic_write_text(p, svg.series_chart(f"{c}: {metric} (7-day average)", by_year, markers))
            res.outputs.append(p)
            recs = sorted(effects.get((c, "base"), []))
            p = out / "plots" / metric / f"{c}_effects.svg"
            atomic_write_text(
                p,
                svg.effects_chart(
                    f"{c}: {metric} effect by window",
                    [r[0] for r in recs],
                    [r[1] for r in recs],
                    [r[2] for r in recs],
                ),
            )
            res.outputs.append(p)
    return res
