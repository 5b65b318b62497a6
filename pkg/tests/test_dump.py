import bz2
import calendar
import datetime as dt
import gzip

import pytest
from hypothesis import given
from hypothesis import strategies as st

from wikishock import synth
from wikishock.dump import (
    COLUMNS,
    DumpFormatError,
    RecordError,
    RecordParser,
    UserKind,
    apply_exclusion_list,
    format_record,
    load_exclusion_list,
    localize,
    open_dump_stream,
    parse_record,
)
from wikishock.metrics import aggregate_daily
from wikishock.profiles import LanguageProfile

EN = LanguageProfile("en", "UTC")
IT = LanguageProfile("it", "Europe/Rome")
TS = calendar.timegm((2020, 3, 15, 12, 0, 0))


def fixture_lines():
    return [
        format_record(timestamp_utc=TS, user_id=11, page_id=5),
        format_record(timestamp_utc=TS + 1, user_id=12, page_id=6, namespace=1),
        format_record(timestamp_utc=TS + 2, user_id=13, page_id=5, is_bot=True),
    ]


def write(tmp_path, lines, name="d.tsv", opener=open):
    p = tmp_path / name
    with opener(p, "wt", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")
    return p


# -- parse_record ------------------------------------------------------------


def test_user_entity_is_skipped():
    assert parse_record(format_record(timestamp_utc=TS, entity="user", user_id=1)) is None


def test_non_create_event_is_skipped():
    assert parse_record(format_record(timestamp_utc=TS, event_type="delete", user_id=1)) is None


def test_article_revision_record():
    rec = parse_record(format_record(timestamp_utc=TS, user_id=4, page_id=9))
    assert rec.namespace == 0
    assert rec.is_bot is False
    assert rec.user_id == 4 and rec.page_id == 9
    assert rec.timestamp_utc == TS


def test_empty_byte_delta_is_zero():
    assert parse_record(format_record(timestamp_utc=TS, user_id=4, byte_delta=None)).byte_delta == 0


def test_bot_flag_from_either_field():
    line = format_record(timestamp_utc=TS, user_id=4).split("\t")
    line[COLUMNS.index("event_user_is_bot_by")] = "group"
    assert parse_record("\t".join(line)).is_bot


def test_wrong_column_count():
    with pytest.raises(RecordError):
        parse_record("revision\tcreate\t2020-01-01 00:00:00.0")


@pytest.mark.parametrize("ts", ["2020-13-01 00:00:00.0", "2020-02-30 10:00:00.0", "yesterday", ""])
def test_bad_timestamp(ts):
    line = format_record(timestamp_utc=TS, user_id=1).split("\t")
    line[COLUMNS.index("event_timestamp")] = ts
    with pytest.raises(RecordError):
        parse_record("\t".join(line))


def test_header_missing_required_column():
    with pytest.raises(DumpFormatError):
        RecordParser(["wiki_db", "event_entity"])


def test_header_reordered_columns():
    names = list(reversed(COLUMNS))
    row = dict(zip(COLUMNS, format_record(timestamp_utc=TS, user_id=8).split("\t")))
    rec = RecordParser(names).parse("\t".join(row[c] for c in names))
    assert rec.user_id == 8


# -- localization ------------------------------------------------------------


def test_localize_examples():
    assert localize(calendar.timegm((2020, 6, 15, 12, 0, 0)), EN) == dt.date(2020, 6, 15)
    assert localize(calendar.timegm((2020, 3, 15, 23, 30, 0)), IT) == dt.date(2020, 3, 16)
    assert localize(calendar.timegm((2020, 7, 1, 22, 30, 0)), IT) == dt.date(2020, 7, 2)
    # DST boundary: 2020-03-29 01:00 UTC is 03:00 CEST
    assert localize(calendar.timegm((2020, 3, 28, 22, 59, 59)), IT) == dt.date(2020, 3, 28)
    assert localize(calendar.timegm((2020, 3, 28, 23, 0, 0)), IT) == dt.date(2020, 3, 29)
    assert localize(calendar.timegm((2020, 10, 24, 22, 0, 0)), IT) == dt.date(2020, 10, 25)
    assert localize(calendar.timegm((2020, 10, 25, 22, 59, 59)), IT) == dt.date(2020, 10, 25)
    assert localize(calendar.timegm((2020, 10, 25, 23, 0, 0)), IT) == dt.date(2020, 10, 26)


@given(st.lists(st.integers(1_500_000_000, 1_700_000_000), min_size=2, max_size=50))
def test_localize_is_monotone(stamps):
    prof = LanguageProfile("ko", "Asia/Seoul")
    dates = [localize(t, prof) for t in sorted(stamps)]
    assert dates == sorted(dates)


# -- exclusion list ----------------------------------------------------------


def test_exclusion_list(tmp_path):
    events, _ = synth.gen_revision_log(
        synth.SynthConfig(seed=1, intensity={"xx": 30.0}, coverage=(dt.date(2020, 1, 1), dt.date(2020, 1, 10)))
    )
    assert all(apply_exclusion_list(e, frozenset()) for e in events)
    excluded = {e.page_id for e in events[:20]}
    assert not apply_exclusion_list(events[0], excluded)
    p = tmp_path / "ex.txt"
    p.write_text("# covid articles\n" + "\n".join(map(str, sorted(excluded))) + "\n\n")
    assert load_exclusion_list(p) == frozenset(excluded)

    dump = tmp_path / "d.tsv"
    synth.write_dump(dump, events)
    stream = open_dump_stream(dump, LanguageProfile("xx"), frozenset(excluded))
    kept = list(stream)
    assert len(kept) == len(events) - sum(e.page_id in excluded for e in events)
    assert stream.records_excluded == len(events) - len(kept)


# -- stream ------------------------------------------------------------------


def test_empty_file(tmp_path):
    p = write(tmp_path, [])
    s = open_dump_stream(p, EN)
    assert list(s) == []
    assert s.lines_read == 0


def test_three_line_fixture(tmp_path):
    s = open_dump_stream(write(tmp_path, fixture_lines()), EN)
    events = list(s)
    assert s.lines_read == 3
    assert s.records_skipped == 1  # talk page
    assert [e.user_kind for e in events] == [UserKind.REGISTERED, UserKind.BOT]
    (day,) = aggregate_daily(events)
    assert day.edit_volume == 1


def test_malformed_lines_are_counted_not_fatal(tmp_path):
    lines = fixture_lines()
    lines.insert(1, "garbage")
    bad_ts = format_record(timestamp_utc=TS, user_id=3).replace("2020-03-15 12:00:00.0", "2020-03-15T12:00")
    lines.append(bad_ts)
    lines.append(format_record(timestamp_utc=TS, user_id=None))  # registered without id
    s = open_dump_stream(write(tmp_path, lines), EN)
    events = list(s)
    assert s.parse_errors == 3
    assert len(events) == s.lines_read - s.records_skipped - s.parse_errors


def test_header_row_is_detected(tmp_path):
    p = write(tmp_path, ["\t".join(COLUMNS)] + fixture_lines())
    s = open_dump_stream(p, EN)
    assert len(list(s)) == 2 and s.lines_read == 3


def test_unreadable_file_is_fatal(tmp_path):
    with pytest.raises(OSError):
        open_dump_stream(tmp_path / "nope.tsv", EN)


@pytest.mark.parametrize("opener,name", [(gzip.open, "d.tsv.gz"), (bz2.open, "d.tsv.bz2")])
def test_compressed_input(tmp_path, opener, name):
    plain = list(open_dump_stream(write(tmp_path, fixture_lines()), EN))
    packed = list(open_dump_stream(write(tmp_path, fixture_lines(), name, opener), EN))
    assert packed == plain


def test_round_trip_and_determinism(tmp_path):
    cfg = synth.SynthConfig(
        seed=9,
        intensity={"it": 40.0},
        coverage=(dt.date(2020, 3, 20), dt.date(2020, 4, 5)),
        timezones={"it": "Europe/Rome"},
    )
    events, _ = synth.gen_revision_log(cfg)
    p = tmp_path / "it.tsv"
    synth.write_dump(p, events)
    first = list(open_dump_stream(p, IT))
    second = list(open_dump_stream(p, IT))
    assert first == events
    assert first == second
