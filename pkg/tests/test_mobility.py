import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import greedy_segmentation, naive_sse
from wikishock import synth
from wikishock.mobility import (
    ChangepointNotFound,
    DailySeries,
    MobilityFormatError,
    MobilityObservation,
    aggregate_weighted,
    binary_segment,
    detect_changepoints,
    detect_mobility_changepoint,
    detect_normality_changepoint,
    load_google_mobility,
    segment_cost,
    smooth_centered,
)
from wikishock.profiles import LanguageProfile

HEADER = (
    "country_region_code,country_region,sub_region_1,sub_region_2,metro_area,iso_3166_2_code,"
    "census_fips_code,place_id,date,retail_and_recreation_percent_change_from_baseline,"
    "grocery_and_pharmacy_percent_change_from_baseline,parks_percent_change_from_baseline,"
    "transit_stations_percent_change_from_baseline,workplaces_percent_change_from_baseline,"
    "residential_percent_change_from_baseline"
)


def write_csv(tmp_path, rows):
    p = tmp_path / "mob.csv"
    p.write_text(HEADER + "\n" + "".join(r + "\n" for r in rows))
    return p


# -- loader ------------------------------------------------------------------


def test_empty_data_section(tmp_path):
    assert load_google_mobility(write_csv(tmp_path, [])) == []


def test_single_country_row(tmp_path):
    (ob,) = load_google_mobility(write_csv(tmp_path, ["IT,Italy,,,,,,ChIJ,2020-03-20,-80,-30,-70,-75,-63,30"]))
    assert ob.country == "IT"
    assert ob.date == dt.date(2020, 3, 20)
    assert ob.pct_change["workplaces"] == -63


def test_sub_regions_are_excluded(tmp_path):
    rows = [
        "IT,Italy,,,,,,a,2020-03-20,,,,,-63,",
        "IT,Italy,Lombardy,,,IT-25,,b,2020-03-20,,,,,-70,",
        "US,United States,,,New York Metro,,,c,2020-03-20,,,,,-50,",
    ]
    obs = load_google_mobility(write_csv(tmp_path, rows))
    assert [o.country for o in obs] == ["IT"]


def test_missing_value_keeps_observation(tmp_path):
    (ob,) = load_google_mobility(write_csv(tmp_path, ["IT,Italy,,,,,,a,2020-03-20,,,,,,12"]))
    assert "workplaces" not in ob.pct_change
    assert ob.pct_change["residential"] == 12


def test_missing_header_is_fatal(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(MobilityFormatError):
        load_google_mobility(p)


def test_country_filter(tmp_path):
    rows = ["IT,Italy,,,,,,a,2020-03-20,,,,,-63,", "DE,Germany,,,,,,b,2020-03-20,,,,,-40,"]
    obs = load_google_mobility(write_csv(tmp_path, rows), countries={"DE"})
    assert [o.country for o in obs] == ["DE"]


# -- weighted aggregation ----------------------------------------------------


def obs(country, values, start=dt.date(2020, 3, 1)):
    return [
        MobilityObservation(country, start + dt.timedelta(days=i), {"workplaces": v})
        for i, v in enumerate(values)
    ]


def test_single_country_weight_one():
    prof = LanguageProfile("it", "Europe/Rome", mobility_countries=(("IT", 60e6),))
    s = aggregate_weighted(obs("IT", [-1.0, -2.0, -3.0]), prof)
    assert s.values.tolist() == [-1.0, -2.0, -3.0]


def test_two_equal_countries():
    prof = LanguageProfile("xx", mobility_countries=(("A", 5.0), ("B", 5.0)))
    s = aggregate_weighted(obs("A", [-10.0]) + obs("B", [-30.0]), prof)
    assert s.values.tolist() == [-20.0]


def test_three_country_weighted_sum_and_scale_invariance():
    rng = np.random.default_rng(0)
    vals = {c: rng.uniform(-80, 10, 20) for c in "ABC"}
    data = [o for c in "ABC" for o in obs(c, vals[c].tolist())]
    w = (0.5, 0.3, 0.2)
    prof = LanguageProfile("xx", mobility_countries=tuple(zip("ABC", w)))
    ref = [sum(wi * vals[c][i] for wi, c in zip(w, "ABC")) for i in range(20)]
    s = aggregate_weighted(data, prof)
    assert np.allclose(s.values, ref, rtol=0, atol=1e-12)
    scaled = LanguageProfile("xx", mobility_countries=tuple(zip("ABC", (5e6, 3e6, 2e6))))
    assert np.allclose(aggregate_weighted(data, scaled).values, s.values, rtol=0, atol=1e-12)


def test_missing_country_renormalizes(caplog):
    prof = LanguageProfile("xx", mobility_countries=(("A", 3.0), ("B", 1.0)))
    data = obs("A", [-40.0, -40.0]) + obs("B", [0.0])
    s = aggregate_weighted(data, prof)
    assert s.values.tolist() == [-30.0, -40.0]
    assert "renormalized" in caplog.text


# -- binary segmentation -----------------------------------------------------


def test_constant_series_has_no_changepoint():
    assert binary_segment(np.full(50, -12.5), 4, 7) == []


def test_noiseless_step_at_50():
    x = np.r_[np.zeros(50), np.full(50, -40.0)]
    assert binary_segment(x, 4, 7) == [50]


def test_two_steps_recovered():
    x = np.r_[np.zeros(30), np.full(30, 10.0), np.full(40, -30.0)]
    assert binary_segment(x, 2, 7) == [30, 60]


def test_too_short_series():
    assert binary_segment(np.arange(10.0), 4, 7) == []


@settings(max_examples=150, deadline=None)
@given(
    st.integers(14, 60),
    st.integers(0, 2**32 - 1),
    st.integers(1, 4),
    st.integers(1, 7),
)
def test_binary_segment_matches_exhaustive_scan(n, seed, max_cp, min_seg):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 3, n) + np.where(np.arange(n) >= rng.integers(0, n), rng.normal(0, 20), 0.0)
    got = binary_segment(x, max_cp, min_seg)
    assert got == greedy_segmentation(x, max_cp, min_seg)
    # structure: increasing, min_segment on both sides
    bounds = [0, *got, n]
    assert all(b - a >= min_seg for a, b in zip(bounds[:-1], bounds[1:]))


def test_cost_non_increasing_in_changepoints():
    rng = np.random.default_rng(3)
    x = np.r_[rng.normal(0, 2, 40), rng.normal(-35, 2, 40), rng.normal(-10, 2, 40)]
    costs = [segment_cost(x, binary_segment(x, k, 7)) for k in range(0, 6)]
    assert costs[0] == pytest.approx(naive_sse(x.tolist()))
    assert all(b <= a + 1e-9 for a, b in zip(costs[:-1], costs[1:]))


# -- changepoint detection ---------------------------------------------------


def test_single_step_date():
    s = synth.gen_mobility(dt.date(2020, 3, 9), -40.0, 0.0, 0)
    assert detect_mobility_changepoint(s) == dt.date(2020, 3, 9)


def test_largest_downward_shift_wins():
    s = synth.gen_mobility(
        dt.date(2020, 3, 20), -40.0, 0.0, 0, extra_steps=[(dt.date(2020, 3, 1), 10.0)]
    )
    assert detect_mobility_changepoint(s) == dt.date(2020, 3, 20)


def test_no_downward_step_is_not_found():
    s = synth.gen_mobility(dt.date(2020, 3, 9), 25.0, 0.0, 0)
    with pytest.raises(ChangepointNotFound):
        detect_mobility_changepoint(s)


def test_step_outside_search_window_is_not_found():
    s = synth.gen_mobility(dt.date(2020, 3, 9), -40.0, 0.0, 0)
    with pytest.raises(ChangepointNotFound):
        detect_mobility_changepoint(s, (dt.date(2020, 4, 1), dt.date(2020, 5, 31)))


def test_smoothed_italy_like_drop_lands_in_march():
    s = synth.gen_mobility(dt.date(2020, 3, 10), -60.0, 4.0, 5)
    d = detect_mobility_changepoint(smooth_centered(s, 7))
    assert dt.date(2020, 3, 3) <= d <= dt.date(2020, 3, 20)


def test_normality_return_to_baseline():
    start = dt.date(2020, 3, 1)
    x = np.r_[np.zeros(10), np.full(20, -50.0), np.zeros(30)]
    s = DailySeries(start, x)
    mob = start + dt.timedelta(days=10)
    got = detect_normality_changepoint(s, mob)
    # first suffix mean within +/-10 points: brute force
    ref = next(i for i in range(11, 60) if abs(x[i:].mean()) <= 10.0)
    assert got == start + dt.timedelta(days=ref)
    assert got > mob


def test_normality_never_recovers():
    s = DailySeries(dt.date(2020, 3, 1), np.r_[np.zeros(10), np.full(50, -50.0)])
    assert detect_normality_changepoint(s, dt.date(2020, 3, 11)) is None


def test_normality_v_shape_matches_scan():
    rng = np.random.default_rng(8)
    start = dt.date(2020, 2, 15)
    x = np.r_[rng.normal(0, 2, 20), np.linspace(-60, 5, 60) + rng.normal(0, 2, 60), rng.normal(2, 2, 40)]
    s = DailySeries(start, x)
    mob = start + dt.timedelta(days=20)
    ref = next((i for i in range(21, len(x)) if abs(x[i:].mean()) <= 10.0), None)
    assert detect_normality_changepoint(s, mob) == start + dt.timedelta(days=ref)


def test_detect_changepoints_end_to_end():
    prof = LanguageProfile("it", "Europe/Rome", mobility_countries=(("IT", 60e6),))
    s = synth.gen_mobility(
        dt.date(2020, 3, 10), -60.0, 1.0, 2, n_days=200, extra_steps=[(dt.date(2020, 6, 1), 58.0)]
    )
    data = [
        MobilityObservation("IT", s.date_at(i), {"workplaces": float(v)}) for i, v in enumerate(s.values)
    ]
    pair = detect_changepoints(data, prof)
    assert abs((pair.mobility_date - dt.date(2020, 3, 10)).days) <= 1
    assert pair.normality_date is not None and pair.normality_date > pair.mobility_date
