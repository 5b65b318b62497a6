"""Pipeline configuration (a single JSON document)."""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .did import VARIANTS
from .metrics import MetricKind
from .mobility import CATEGORIES
from .profiles import ChangepointPair, LanguageProfile, SizeClass

SCHEMA_VERSION = 1

DEFAULT_METRICS = (
    MetricKind.EDIT_VOLUME.value,
    MetricKind.NEWCOMERS.value,
    MetricKind.REVERT_RATE.value,
    MetricKind.EDITORS_1_4.value,
    MetricKind.EDITORS_5_24.value,
    MetricKind.EDITORS_25_99.value,
    MetricKind.EDITORS_100PLUS.value,
    MetricKind.BYTE_DELTA.value,
)


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    languages: list[LanguageProfile]
    base_dir: Path = Path(".")
    snapshot: str | None = None
    baseline_language: str | None = None
    mobility_csv: Path | None = None
    cache_dir: Path = Path("cache")
    output_dir: Path = Path("out")
    coverage: tuple[dt.date, dt.date] | None = None
    window_len: int = 7
    baseline_len: int = 30
    n_windows: int = 120
    treated_year: int = 2020
    control_years: tuple[int, ...] = (2018, 2019)
    metrics: tuple[str, ...] = DEFAULT_METRICS
    count_transform: str = "log1p"
    mad_k: float = 5.0
    mobility_category: str = "workplaces"
    search_window: tuple[dt.date, dt.date] = (dt.date(2020, 2, 1), dt.date(2020, 5, 31))
    max_changepoints: int = 4
    min_segment: int = 7
    normality_band: float = 0.10
    mobility_smoothing: int = 7
    robustness: tuple[str, ...] = ()
    rest_enabled: bool = False
    rest_rate: float = 5.0
    ordering_tolerance: int = 0
    plot_until: tuple[int, int] = (10, 1)
    extra: dict = field(default_factory=dict, repr=False)

    @property
    def language_codes(self) -> list[str]:
        return [p.code for p in self.languages]

    def profile(self, code: str) -> LanguageProfile:
        for p in self.languages:
            if p.code == code:
                return p
        raise KeyError(code)

    def subset(self, codes) -> PipelineConfig:
        codes = list(codes)
        unknown = [c for c in codes if c not in self.language_codes]
        if unknown:
            raise ConfigError(f"unknown languages: {', '.join(unknown)}")
        return replace(self, languages=[p for p in self.languages if p.code in codes])

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def transform_for(self, metric: str) -> str:
        if metric == MetricKind.BYTE_DELTA.value:
            return "identity"
        if metric == MetricKind.REVERT_RATE.value:
            return "log1p"
        return self.count_transform

    def baseline_index(self, codes) -> int:
        codes = list(codes)
        if self.baseline_language in codes:
            return codes.index(self.baseline_language)
        return 0


def _date(v, what):
    try:
        return dt.date.fromisoformat(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{what}: not an ISO date: {v!r}") from None


def _profile(obj, i) -> LanguageProfile:
    if not isinstance(obj, dict) or "code" not in obj:
        raise ConfigError(f"languages[{i}] needs a code")
    code = obj["code"]
    override = obj.get("changepoint_override")
    try:
        return LanguageProfile(
            code=code,
            timezone=obj.get("timezone", "UTC"),
            size_class=SizeClass(obj.get("size_class", "Small")),
            mobility_countries=tuple((str(c), float(p)) for c, p in obj.get("mobility_countries", [])),
            changepoint_override=ChangepointPair.from_json(override) if override else None,
            dumps=tuple(obj.get("dumps", [])),
            exclusion_list=obj.get("exclusion_list"),
        )
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"languages[{i}] ({code}): {exc}") from None


def parse_config(doc: dict, base_dir=".") -> PipelineConfig:
    """Validate a config document; every range check happens here, before any work."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    langs = doc.get("languages")
    if not langs:
        raise ConfigError("languages must be a non-empty list")
    profiles = [_profile(o, i) for i, o in enumerate(langs)]
    codes = [p.code for p in profiles]
    if len(set(codes)) != len(codes):
        raise ConfigError("duplicate language codes")

    paths = doc.get("paths", {})
    window = doc.get("window", {})
    years = doc.get("years", {})
    mob = doc.get("mobility", {})
    rest = doc.get("rest_api", {})
    cfg = PipelineConfig(
        languages=profiles,
        base_dir=Path(base_dir),
        snapshot=doc.get("snapshot"),
        baseline_language=doc.get("baseline_language", codes[0]),
        mobility_csv=Path(paths["mobility_csv"]) if paths.get("mobility_csv") else None,
        cache_dir=Path(paths.get("cache_dir", "cache")),
        output_dir=Path(paths.get("output_dir", "out")),
        window_len=int(window.get("window_len", 7)),
        baseline_len=int(window.get("baseline_len", 30)),
        n_windows=int(window.get("n_windows", 120)),
        treated_year=int(years.get("treated", 2020)),
        control_years=tuple(int(y) for y in years.get("control", (2018, 2019))),
        metrics=tuple(doc.get("metrics", DEFAULT_METRICS)),
        count_transform=doc.get("transform", {}).get("counts", "log1p"),
        mad_k=float(doc.get("mad_k", 5.0)),
        mobility_category=mob.get("category", "workplaces"),
        max_changepoints=int(mob.get("max_changepoints", 4)),
        min_segment=int(mob.get("min_segment", 7)),
        normality_band=float(mob.get("band", 0.10)),
        mobility_smoothing=int(mob.get("smoothing", 7)),
        robustness=tuple(doc.get("robustness", ())),
        rest_enabled=bool(rest.get("enabled", False)),
        rest_rate=float(rest.get("requests_per_second", 5.0)),
        ordering_tolerance=int(doc.get("ordering_tolerance_seconds", 0)),
    )
    if "search_start" in mob or "search_end" in mob:
        cfg.search_window = (
            _date(mob.get("search_start", "2020-02-01"), "mobility.search_start"),
            _date(mob.get("search_end", "2020-05-31"), "mobility.search_end"),
        )
    cov = doc.get("coverage")
    if cov:
        cfg.coverage = (_date(cov.get("start"), "coverage.start"), _date(cov.get("end"), "coverage.end"))
    if "plot_until" in doc:
        until = _date(doc["plot_until"], "plot_until")
        cfg.plot_until = (until.month, until.day)
    _check(cfg)
    return cfg


def _check(cfg: PipelineConfig) -> None:
    errs = []
    if cfg.baseline_language not in cfg.language_codes:
        errs.append(f"baseline_language {cfg.baseline_language!r} is not a configured language")
    if not 1 <= cfg.window_len <= 365:
        errs.append("window.window_len must be in 1..365")
    if not 1 <= cfg.baseline_len <= 365:
        errs.append("window.baseline_len must be in 1..365")
    if not 1 <= cfg.n_windows <= 366:
        errs.append("window.n_windows must be in 1..366")
    if not cfg.control_years or cfg.treated_year in cfg.control_years:
        errs.append("years.control must be non-empty and exclude the treated year")
    bad = [m for m in cfg.metrics if m not in {k.value for k in MetricKind}]
    if bad or not cfg.metrics:
        errs.append(f"unknown metrics: {bad}")
    if cfg.count_transform not in ("log1p", "log"):
        errs.append(f"transform.counts must be one of log1p, log (got {cfg.count_transform!r})")
    if not cfg.mad_k > 0:
        errs.append("mad_k must be positive")
    if cfg.mobility_category not in CATEGORIES:
        errs.append(f"mobility.category must be one of {CATEGORIES}")
    if cfg.max_changepoints < 1 or cfg.min_segment < 1:
        errs.append("mobility.max_changepoints and min_segment must be >= 1")
    if not 0 < cfg.normality_band < 1:
        errs.append("mobility.band must be in (0, 1)")
    if cfg.mobility_smoothing < 1 or cfg.mobility_smoothing % 2 == 0:
        errs.append("mobility.smoothing must be a positive odd number")
    if cfg.search_window[0] > cfg.search_window[1]:
        errs.append("mobility search window is empty")
    if cfg.coverage and cfg.coverage[0] > cfg.coverage[1]:
        errs.append("coverage is empty")
    bad = [v for v in cfg.robustness if v not in VARIANTS[1:]]
    if bad:
        errs.append(f"unknown robustness variants: {bad}")
    if cfg.rest_rate <= 0:
        errs.append("rest_api.requests_per_second must be positive")
    if cfg.ordering_tolerance < 0:
        errs.append("ordering_tolerance_seconds must be >= 0")
    if errs:
        raise ConfigError("; ".join(errs))


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(doc, base_dir=path.parent)
