"""Rolling-window triple-difference estimation.

For each language ``l`` the log metric is modelled as

    v = b0 + b1'L + b2 Y + b3 P + b4'(YL) + b5'(PL) + b6 (YP) + b7'(YPL) + e

with ``Y`` marking the treated year, ``P`` the post-changepoint window and
``L`` indicators for every language except the reference one. The effect of
interest for language ``l`` is ``b6 + b7[l]`` (``b6`` alone for the
reference language).
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .metrics import MetricKind, MetricSeries

TREATED_YEAR = 2020
CONTROL_YEARS = (2018, 2019)

TRANSFORMS = ("log1p", "log", "identity")


class PanelError(ValueError):
    """Dates needed for a panel are missing from a series."""


class RankDeficiencyError(np.linalg.LinAlgError):
    """The design matrix does not have full column rank."""


@dataclass(frozen=True)
class WindowSpec:
    n: int = 0
    window_len: int = 7
    baseline_len: int = 30

    def __post_init__(self):
        if self.window_len < 1 or self.baseline_len < 1 or self.n < 0:
            raise ValueError(f"invalid window spec {self}")


@dataclass
class Panel:
    """Long-format regression rows.

    ``language`` holds indices into ``languages``; ``year`` is the calendar
    year of each row, from which ``Y`` follows.
    """

    languages: tuple[str, ...]
    language: np.ndarray
    Y: np.ndarray
    P: np.ndarray
    log_value: np.ndarray
    year: np.ndarray
    dates: list = field(default_factory=list, repr=False)

    def __len__(self):
        return int(self.language.shape[0])


def default_transform(kind) -> str:
    try:
        kind = MetricKind(kind)
    except ValueError:
        return "log1p"
    return "identity" if kind is MetricKind.BYTE_DELTA else "log1p"


def transform_values(values: np.ndarray, how: str) -> np.ndarray:
    """Apply the response transform; rows that become undefined are NaN."""
    v = np.asarray(values, dtype=np.float64)
    if how == "log1p":
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.log1p(v)
        out[~(v > -1)] = np.nan
        return out
    if how == "log":
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.log(v)
        out[~(v > 0)] = np.nan
        return out
    if how == "identity":
        return v.copy()
    raise ValueError(f"unknown transform {how!r}")


def same_day_in_year(d: dt.date, year: int) -> dt.date:
    """The same month-day in ``year``; Feb 29 falls back to Feb 28."""
    if d.month == 2 and d.day == 29:
        try:
            return dt.date(year, 2, 29)
        except ValueError:
            return dt.date(year, 2, 28)
    return dt.date(year, d.month, d.day)


def panel_dates(changepoint: dt.date, spec: WindowSpec) -> tuple[list[dt.date], list[dt.date]]:
    """Baseline and treatment dates (in the changepoint's year)."""
    base = [changepoint - dt.timedelta(days=i) for i in range(spec.baseline_len, 0, -1)]
    treat = [changepoint + dt.timedelta(days=spec.n + i) for i in range(spec.window_len)]
    return base, treat


def build_panel(
    series: Mapping[str, MetricSeries],
    changepoints: Mapping[str, dt.date],
    spec: WindowSpec,
    languages: Sequence[str] | None = None,
    treated_year: int = TREATED_YEAR,
    control_years: Sequence[int] = CONTROL_YEARS,
    transform: str = "log1p",
) -> Panel:
    """Stack baseline and treatment days for every language and year.

    Rows whose transformed value is undefined (NaN input, or a zero under
    the plain log) are dropped. Missing dates raise :class:`PanelError`
    listing every gap.
    """
    languages = tuple(languages) if languages is not None else tuple(series)
    years = (*control_years, treated_year)
    blocks = []
    gaps = []
    for li, lang in enumerate(languages):
        s = series[lang]
        cp = changepoints[lang]
        base, treat = panel_dates(cp, spec)
        days = base + treat
        period = np.r_[np.zeros(len(base)), np.ones(len(treat))]
        start = s.start.toordinal()
        for year in years:
            if year == cp.year:
                mapped = days
            else:
                mapped = [same_day_in_year(d, year + (d.year - cp.year)) for d in days]
            idx = np.fromiter((d.toordinal() for d in mapped), dtype=np.int64, count=len(mapped)) - start
            ok = (idx >= 0) & (idx < len(s))
            if not ok.all():
                gaps += [f"{lang}:{d.isoformat()}" for d, g in zip(mapped, ok.tolist()) if not g]
                continue
            blocks.append((li, 1.0 if year == treated_year else 0.0, period, s.values[idx], year, mapped))
    if gaps:
        shown = ", ".join(gaps[:20]) + (f" (+{len(gaps) - 20} more)" if len(gaps) > 20 else "")
        raise PanelError(f"missing dates: {shown}")
    if not blocks:
        empty = np.empty(0)
        return Panel(languages, empty.astype(np.intp), empty, empty, empty, empty.astype(np.int64), [])
    sizes = [b[2].shape[0] for b in blocks]
    language = np.repeat(np.array([b[0] for b in blocks], dtype=np.intp), sizes)
    Y = np.repeat(np.array([b[1] for b in blocks]), sizes)
    year_arr = np.repeat(np.array([b[4] for b in blocks], dtype=np.int64), sizes)
    P = np.concatenate([b[2] for b in blocks])
    logv = transform_values(np.concatenate([b[3] for b in blocks]), transform)
    keep = ~np.isnan(logv)
    dates = [d for b in blocks for d in b[5]]
    return Panel(
        languages=languages,
        language=language[keep],
        Y=Y[keep],
        P=P[keep],
        log_value=logv[keep],
        year=year_arr[keep],
        dates=[d for d, k in zip(dates, keep.tolist()) if k],
    )


def coefficient_names(languages: Sequence[str], baseline: int) -> list[str]:
    others = [lang for i, lang in enumerate(languages) if i != baseline]
    return (
        ["b0"]
        + [f"b1[{x}]" for x in others]
        + ["b2", "b3"]
        + [f"b4[{x}]" for x in others]
        + [f"b5[{x}]" for x in others]
        + ["b6"]
        + [f"b7[{x}]" for x in others]
    )


def build_design(panel: Panel, baseline_language_index: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Design matrix ``[1, L, Y, P, YL, PL, YP, YPL]`` and response.

    Raises RankDeficiencyError naming the first empty (language, Y, P) cell.
    """
    n_lang = len(panel.languages)
    b = baseline_language_index
    if not 0 <= b < n_lang:
        raise IndexError(f"baseline index {b} out of range")
    counts = np.zeros((n_lang, 2, 2), dtype=np.int64)
    np.add.at(counts, (panel.language, panel.Y.astype(np.intp), panel.P.astype(np.intp)), 1)
    for li in range(n_lang):
        for y in (0, 1):
            for p in (0, 1):
                if counts[li, y, p] == 0:
                    raise RankDeficiencyError(
                        f"empty cell: language={panel.languages[li]} Y={y} P={p}"
                    )
    k = n_lang - 1
    n = len(panel)
    # column of each language's indicator; the baseline gets none
    col = np.full(n_lang, -1, dtype=np.intp)
    col[[i for i in range(n_lang) if i != b]] = np.arange(k)
    X = np.zeros((n, 4 * n_lang), dtype=np.float64)
    Y, P = panel.Y, panel.P
    X[:, 0] = 1.0
    X[:, 1 + k] = Y
    X[:, 2 + k] = P
    X[:, 3 + 3 * k] = Y * P
    rows = np.flatnonzero(col[panel.language] >= 0)
    c = col[panel.language[rows]]
    X[rows, 1 + c] = 1.0
    X[rows, 3 + k + c] = Y[rows]
    X[rows, 3 + 2 * k + c] = P[rows]
    X[rows, 4 + 3 * k + c] = Y[rows] * P[rows]
    return X, panel.log_value.copy()


@dataclass
class DidFit:
    beta: np.ndarray
    covariance: np.ndarray
    sigma2: float
    dof: int
    n_rows: int
    languages: tuple[str, ...] = ()
    baseline: int = 0

    @property
    def names(self) -> list[str]:
        return coefficient_names(self.languages, self.baseline)

    def coef(self, name: str) -> float:
        return float(self.beta[self.names.index(name)])

    def _groups(self):
        k = len(self.languages) - 1
        return {
            "b0": slice(0, 1),
            "b1": slice(1, 1 + k),
            "b2": slice(1 + k, 2 + k),
            "b3": slice(2 + k, 3 + k),
            "b4": slice(3 + k, 3 + 2 * k),
            "b5": slice(3 + 2 * k, 3 + 3 * k),
            "b6": slice(3 + 3 * k, 4 + 3 * k),
            "b7": slice(4 + 3 * k, 4 + 4 * k),
        }

    def group(self, name: str) -> np.ndarray:
        return self.beta[self._groups()[name]]


class OlsFactor:
    """Thin QR factorization of a design matrix, reusable across responses."""

    def __init__(self, X: np.ndarray):
        X = np.asarray(X, dtype=np.float64)
        n, p = X.shape
        if n < p:
            raise RankDeficiencyError(f"{n} rows for {p} columns")
        self.X = X
        self.Q, self.R = np.linalg.qr(X, mode="reduced")
        diag = np.abs(np.diag(self.R))
        tol = max(n, p) * np.finfo(np.float64).eps * (diag.max() if p else 0.0)
        bad = np.flatnonzero(diag <= tol)
        if bad.size:
            raise RankDeficiencyError(f"design is rank deficient (columns {bad.tolist()})")
        self.Rinv = solve_triangular(self.R, np.eye(p), lower=False)
        self.xtx_inv = self.Rinv @ self.Rinv.T

    def fit(self, y: np.ndarray, languages=(), baseline: int = 0) -> DidFit:
        n, p = self.X.shape
        y = np.asarray(y, dtype=np.float64)
        beta = solve_triangular(self.R, self.Q.T @ y, lower=False)
        resid = y - self.X @ beta
        dof = n - p
        rss = float(resid @ resid)
        sigma2 = rss / dof if dof > 0 else math.nan
        cov = sigma2 * self.xtx_inv
        cov = 0.5 * (cov + cov.T)
        return DidFit(beta, cov, sigma2, dof, n, tuple(languages), baseline)


def fit_ols(design: np.ndarray, response: np.ndarray, languages=(), baseline: int = 0) -> DidFit:
    """Least squares via Householder QR with classical (homoskedastic) covariance."""
    return OlsFactor(design).fit(response, languages, baseline)


def effect_for_language(fit: DidFit, language_index: int) -> tuple[float, float]:
    """``(delta, se)`` of the post-changepoint treated-year effect."""
    k = len(fit.languages) - 1
    i6 = 3 + 3 * k
    b = fit.baseline
    if language_index == b:
        return float(fit.beta[i6]), math.sqrt(max(fit.covariance[i6, i6], 0.0))
    pos = language_index if language_index < b else language_index - 1
    i7 = 4 + 3 * k + pos
    C = fit.covariance
    var = C[i6, i6] + C[i7, i7] + 2.0 * C[i6, i7]
    return float(fit.beta[i6] + fit.beta[i7]), math.sqrt(max(var, 0.0))


def effect_to_percent(delta: float) -> float:
    """Post-period level as a percentage of the expected level."""
    return 100.0 * math.exp(delta)


@dataclass(frozen=True)
class WindowEffect:
    n: int
    delta: float
    se: float
    n_rows: int

    @property
    def ci_lo(self) -> float:
        return self.delta - 2.0 * self.se

    @property
    def ci_hi(self) -> float:
        return self.delta + 2.0 * self.se

    @property
    def significant(self) -> bool:
        return abs(self.delta) > 2.0 * self.se

    @property
    def percent(self) -> float:
        return effect_to_percent(self.delta)


@dataclass
class EffectSeries:
    language: str
    metric: str
    variant: str = "base"
    records: list[WindowEffect] = field(default_factory=list)
    missing: dict[int, str] = field(default_factory=dict)

    @property
    def deltas(self) -> np.ndarray:
        return np.array([r.delta for r in self.records])

    @property
    def ses(self) -> np.ndarray:
        return np.array([r.se for r in self.records])


def _resolve_baseline(languages: Sequence[str], baseline) -> int:
    if isinstance(baseline, str):
        return list(languages).index(baseline)
    return int(baseline)


def run_window_sequence(
    series: Mapping[str, MetricSeries],
    changepoints: Mapping[str, dt.date],
    metric: str,
    languages: Sequence[str] | None = None,
    baseline: int | str = 0,
    n_windows: int = 120,
    window_len: int = 7,
    baseline_len: int = 30,
    transform: str | None = None,
    variant: str = "base",
    treated_year: int = TREATED_YEAR,
    control_years: Sequence[int] = CONTROL_YEARS,
) -> dict[str, EffectSeries]:
    """One independent fit per window ``n = 0 .. n_windows - 1``.

    Series are expected to be outlier-cleaned already. A window whose panel
    or design fails is recorded under ``missing`` for every language and the
    sequence continues.
    """
    languages = tuple(languages) if languages is not None else tuple(series)
    b = _resolve_baseline(languages, baseline)
    transform = transform or default_transform(metric)
    out = {lang: EffectSeries(lang, str(metric), variant) for lang in languages}
    factor = None
    for n in range(n_windows):
        spec = WindowSpec(n, window_len, baseline_len)
        try:
            panel = build_panel(
                series, changepoints, spec, languages, treated_year, control_years, transform
            )
            X, y = build_design(panel, b)
            if factor is None or factor.X.shape != X.shape or not np.array_equal(factor.X, X):
                factor = OlsFactor(X)
            fit = factor.fit(y, languages, b)
        except (PanelError, RankDeficiencyError, np.linalg.LinAlgError) as exc:
            for es in out.values():
                es.missing[n] = str(exc)
            continue
        for li, lang in enumerate(languages):
            delta, se = effect_for_language(fit, li)
            out[lang].records.append(WindowEffect(n, delta, se, fit.n_rows))
    return out


VARIANTS = ("base", "window14", "cp-minus7", "cp-plus7")


def variant_parameters(variant: str, window_len: int = 7) -> tuple[int, int]:
    """``(window_len, changepoint_shift_days)`` for a named variant."""
    if variant == "base":
        return window_len, 0
    if variant == "window14":
        return 14, 0
    if variant == "cp-minus7":
        return window_len, -7
    if variant == "cp-plus7":
        return window_len, 7
    raise ValueError(f"unknown variant {variant!r}")


def run_variant(
    variant: str,
    series: Mapping[str, MetricSeries],
    changepoints: Mapping[str, dt.date],
    metric: str,
    window_len: int = 7,
    **kwargs,
) -> dict[str, EffectSeries]:
    wl, shift = variant_parameters(variant, window_len)
    cps = {k: v + dt.timedelta(days=shift) for k, v in changepoints.items()}
    return run_window_sequence(series, cps, metric, window_len=wl, variant=variant, **kwargs)


def robustness_variants(
    series: Mapping[str, MetricSeries],
    changepoints: Mapping[str, dt.date],
    metric: str,
    variants: Sequence[str] = VARIANTS[1:],
    **kwargs,
) -> dict[str, dict[str, EffectSeries]]:
    """Re-run the window sequence with a 14-day window and with changepoints shifted by -7/+7 days."""
    return {v: run_variant(v, series, changepoints, metric, **kwargs) for v in variants}
