"""Streaming reader for MediaWiki history TSV dumps.

The dumps carry one event per line with 70 tab-separated columns (the WMF
``mediawiki_history`` schema). Published dump files have no header row;
files that do start with a header are accepted and their columns are
resolved by name. Only ``revision``/``create`` events in namespace 0
survive; everything else is counted and skipped.
"""

from __future__ import annotations

import bz2
import datetime as dt
import enum
import gzip
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator
from zoneinfo import ZoneInfo

from .kernels import parse_timestamp
from .profiles import LanguageProfile

log = logging.getLogger(__name__)

COLUMNS = (
    "wiki_db",
    "event_entity",
    "event_type",
    "event_timestamp",
    "event_comment",
    "event_user_id",
    "event_user_text_historical",
    "event_user_text",
    "event_user_blocks_historical",
    "event_user_blocks",
    "event_user_groups_historical",
    "event_user_groups",
    "event_user_is_bot_by_historical",
    "event_user_is_bot_by",
    "event_user_is_created_by_self",
    "event_user_is_created_by_system",
    "event_user_is_created_by_peer",
    "event_user_is_anonymous",
    "event_user_registration_timestamp",
    "event_user_creation_timestamp",
    "event_user_first_edit_timestamp",
    "event_user_revision_count",
    "event_user_seconds_since_previous_revision",
    "page_id",
    "page_title_historical",
    "page_title",
    "page_namespace_historical",
    "page_namespace_is_content_historical",
    "page_namespace",
    "page_namespace_is_content",
    "page_is_redirect",
    "page_is_deleted",
    "page_creation_timestamp",
    "page_first_edit_timestamp",
    "page_revision_count",
    "page_seconds_since_previous_revision",
    "user_id",
    "user_text_historical",
    "user_text",
    "user_blocks_historical",
    "user_blocks",
    "user_groups_historical",
    "user_groups",
    "user_is_bot_by_historical",
    "user_is_bot_by",
    "user_is_created_by_self",
    "user_is_created_by_system",
    "user_is_created_by_peer",
    "user_is_anonymous",
    "user_registration_timestamp",
    "user_creation_timestamp",
    "user_first_edit_timestamp",
    "revision_id",
    "revision_parent_id",
    "revision_minor_edit",
    "revision_deleted_parts",
    "revision_deleted_parts_are_suppressed",
    "revision_text_bytes",
    "revision_text_bytes_diff",
    "revision_text_sha1",
    "revision_content_model",
    "revision_content_format",
    "revision_is_deleted_by_page_deletion",
    "revision_deleted_by_page_deletion_timestamp",
    "revision_is_identity_reverted",
    "revision_first_identity_reverting_revision_id",
    "revision_seconds_to_identity_revert",
    "revision_is_identity_revert",
    "revision_is_from_before_page_creation",
    "revision_tags",
)

# columns the reader actually needs
REQUIRED = (
    "event_entity",
    "event_type",
    "event_timestamp",
    "event_user_id",
    "event_user_is_bot_by_historical",
    "event_user_is_bot_by",
    "event_user_is_anonymous",
    "page_id",
    "page_namespace_historical",
    "revision_is_identity_revert",
    "revision_text_bytes_diff",
)

ARTICLE_NAMESPACE = 0
_EMPTY_ARRAY = ("", "[]", "\\N")


class DumpFormatError(ValueError):
    """A header that lacks required columns."""


class RecordError(ValueError):
    """A single malformed dump line."""


class UserKind(str, enum.Enum):
    ANONYMOUS = "Anonymous"
    REGISTERED = "Registered"
    BOT = "Bot"


@dataclass(frozen=True, slots=True)
class RawDumpRecord:
    event_entity: str
    event_type: str
    timestamp_utc: int  # epoch seconds
    is_bot: bool
    is_anonymous: bool
    user_id: int | None
    page_id: int
    namespace: int
    is_identity_revert: bool
    byte_delta: int


@dataclass(frozen=True, slots=True)
class RevisionEvent:
    language: str
    local_date: dt.date
    user_kind: UserKind
    user_id: int | None
    is_identity_revert: bool
    byte_delta: int
    page_id: int
    timestamp_utc: int

    @property
    def is_bot(self) -> bool:
        return self.user_kind is UserKind.BOT


def _opt_int(s: str) -> int | None:
    if s == "" or s == "\\N":
        return None
    return int(s)


class RecordParser:
    """Turns TSV lines into :class:`RawDumpRecord` values.

    Column positions come from a header row when one is supplied, otherwise
    from :data:`COLUMNS`.
    """

    def __init__(self, header: Iterable[str] | None = None):
        names = tuple(header) if header is not None else COLUMNS
        missing = [c for c in REQUIRED if c not in names]
        if missing:
            raise DumpFormatError(f"dump header lacks columns: {', '.join(missing)}")
        self.ncols = len(names)
        pos = {name: i for i, name in enumerate(names)}
        (
            self._entity,
            self._type,
            self._ts,
            self._uid,
            self._bot_hist,
            self._bot_cur,
            self._anon,
            self._page,
            self._ns,
            self._revert,
            self._bytes,
        ) = (pos[c] for c in REQUIRED)

    def parse(self, line: str) -> RawDumpRecord | None:
        """Parse one line; ``None`` for non-revision events.

        Raises RecordError on wrong column count or unparseable values.
        """
        fields = line.rstrip("\r\n").split("\t")
        if len(fields) != self.ncols:
            raise RecordError(f"expected {self.ncols} columns, got {len(fields)}")
        if fields[self._entity] != "revision" or fields[self._type] != "create":
            return None
        try:
            ts = parse_timestamp(fields[self._ts])
            byte_field = fields[self._bytes]
            return RawDumpRecord(
                event_entity="revision",
                event_type="create",
                timestamp_utc=ts,
                is_bot=(
                    fields[self._bot_hist] not in _EMPTY_ARRAY
                    or fields[self._bot_cur] not in _EMPTY_ARRAY
                ),
                is_anonymous=fields[self._anon] == "true",
                user_id=_opt_int(fields[self._uid]),
                page_id=int(fields[self._page]),
                namespace=int(fields[self._ns]),
                is_identity_revert=fields[self._revert] == "true",
                byte_delta=0 if byte_field in ("", "\\N") else int(byte_field),
            )
        except ValueError as exc:
            raise RecordError(str(exc)) from exc


def parse_record(line: str) -> RawDumpRecord | None:
    """Parse a header-less dump line in the canonical column order."""
    return _DEFAULT_PARSER.parse(line)


_DEFAULT_PARSER = RecordParser()


class Localizer:
    """Maps UTC epoch seconds to civil dates in one timezone.

    Remembers the UTC span of the last local day seen, so sorted input costs
    one zone lookup per day rather than per event.
    """

    def __init__(self, timezone: str):
        self.utc = timezone in ("UTC", "Etc/UTC")
        self.zone = ZoneInfo(timezone)
        self._lo = 1
        self._hi = 0
        self._date = None

    def __call__(self, ts: int) -> dt.date:
        if self._lo <= ts < self._hi:
            return self._date
        if self.utc:
            day = ts // 86400
            self._date = dt.date(1970, 1, 1) + dt.timedelta(days=day)
            self._lo, self._hi = day * 86400, day * 86400 + 86400
            return self._date
        local = dt.datetime.fromtimestamp(ts, tz=self.zone)
        d = local.date()
        start = dt.datetime(d.year, d.month, d.day, tzinfo=self.zone)
        nxt = d + dt.timedelta(days=1)
        end = dt.datetime(nxt.year, nxt.month, nxt.day, tzinfo=self.zone)
        lo, hi = int(start.timestamp()), int(end.timestamp())
        if lo <= ts < hi:
            self._lo, self._hi, self._date = lo, hi, d
        return d


def localize(ts_utc: int | dt.datetime, profile: LanguageProfile) -> dt.date:
    """Civil date of a UTC instant in the profile's timezone."""
    if isinstance(ts_utc, dt.datetime):
        if ts_utc.tzinfo is None:
            ts_utc = ts_utc.replace(tzinfo=dt.timezone.utc)
        return ts_utc.astimezone(ZoneInfo(profile.timezone)).date()
    return Localizer(profile.timezone)(ts_utc)


def apply_exclusion_list(event: RevisionEvent, excluded_pages) -> bool:
    """True when the event's page is not excluded."""
    return event.page_id not in excluded_pages


def load_exclusion_list(path) -> frozenset[int]:
    """Newline-delimited page ids; blank lines and ``#`` comments ignored."""
    ids = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            try:
                ids.add(int(s))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not a page id: {s!r}") from None
    return frozenset(ids)


def open_text(path) -> io.TextIOBase:
    """Open plain, gzip or bzip2 text by sniffing magic bytes."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(3)
    if magic[:2] == b"\x1f\x8b":
        raw = gzip.open(path, "rb")
    elif magic == b"BZh":
        raw = bz2.open(path, "rb")
    else:
        raw = open(path, "rb")
    return io.TextIOWrapper(raw, encoding="utf-8", errors="replace", newline="\n")


def to_event(record: RawDumpRecord, profile: LanguageProfile, localizer=None) -> RevisionEvent:
    if record.is_bot:
        kind = UserKind.BOT
    elif record.is_anonymous:
        kind = UserKind.ANONYMOUS
    else:
        if record.user_id is None:
            raise RecordError("registered user without user id")
        kind = UserKind.REGISTERED
    loc = localizer or Localizer(profile.timezone)
    return RevisionEvent(
        language=profile.code,
        local_date=loc(record.timestamp_utc),
        user_kind=kind,
        user_id=record.user_id,
        is_identity_revert=record.is_identity_revert,
        byte_delta=record.byte_delta,
        page_id=record.page_id,
        timestamp_utc=record.timestamp_utc,
    )


class DumpStream:
    """Iterator of :class:`RevisionEvent` over one dump file.

    Counters: ``lines_read`` (data lines, header excluded), ``records_skipped``
    (non-revision, non-article or excluded), ``parse_errors``, and
    ``records_excluded`` (the exclusion-list share of ``records_skipped``).
    """

    def __init__(self, path, profile: LanguageProfile, excluded_pages=frozenset(), max_error_log=10):
        self.path = Path(path)
        self.profile = profile
        self.excluded_pages = excluded_pages
        self.lines_read = 0
        self.records_skipped = 0
        self.records_excluded = 0
        self.parse_errors = 0
        self._max_error_log = max_error_log
        # fail fast on unreadable files
        with open(self.path, "rb"):
            pass

    @property
    def counters(self) -> dict[str, int]:
        return {
            "lines_read": self.lines_read,
            "records_skipped": self.records_skipped,
            "records_excluded": self.records_excluded,
            "parse_errors": self.parse_errors,
        }

    def __iter__(self) -> Iterator[RevisionEvent]:
        profile = self.profile
        localizer = Localizer(profile.timezone)
        excluded = self.excluded_pages
        with open_text(self.path) as fh:
            parser = RecordParser()
            first = True
            for line in fh:
                if first:
                    first = False
                    head = line.rstrip("\r\n").split("\t")
                    if "event_entity" in head:
                        parser = RecordParser(head)
                        continue
                if line == "\n" or line == "":
                    continue
                self.lines_read += 1
                try:
                    rec = parser.parse(line)
                    if rec is None or rec.namespace != ARTICLE_NAMESPACE:
                        self.records_skipped += 1
                        continue
                    if rec.page_id in excluded:
                        self.records_skipped += 1
                        self.records_excluded += 1
                        continue
                    event = to_event(rec, profile, localizer)
                except RecordError as exc:
                    self.parse_errors += 1
                    if self.parse_errors <= self._max_error_log:
                        log.warning("%s:%d: skipped malformed line (%s)", self.path, self.lines_read, exc)
                    continue
                yield event


def open_dump_stream(path, profile: LanguageProfile, excluded_pages=frozenset()) -> DumpStream:
    """Stream article-namespace revision events from a dump file in file order."""
    return DumpStream(path, profile, excluded_pages)


_EPOCH = dt.datetime(1970, 1, 1)


def _fmt_ts(ts: int) -> str:
    d = _EPOCH + dt.timedelta(seconds=ts)
    return f"{d.year:04d}-{d.month:02d}-{d.day:02d} {d.hour:02d}:{d.minute:02d}:{d.second:02d}.0"


def format_record(
    *,
    timestamp_utc: int,
    entity: str = "revision",
    event_type: str = "create",
    user_id: int | None = None,
    is_anonymous: bool = False,
    is_bot: bool = False,
    page_id: int = 1,
    namespace: int = 0,
    is_identity_revert: bool = False,
    byte_delta: int | None = 0,
    wiki_db: str = "xxwiki",
    revision_id: int | None = None,
) -> str:
    """Render one dump line (no trailing newline) in the canonical column order."""
    row = [""] * len(COLUMNS)
    name = "" if is_anonymous else f"User{user_id}"
    bot = "name,group" if is_bot else ""
    content = "true" if namespace == 0 else "false"
    title = f"Page_{page_id}"
    for col, value in (
        ("wiki_db", wiki_db),
        ("event_entity", entity),
        ("event_type", event_type),
        ("event_timestamp", _fmt_ts(timestamp_utc)),
        ("event_user_id", "" if user_id is None else str(user_id)),
        ("event_user_text_historical", name),
        ("event_user_text", name),
        ("event_user_is_bot_by_historical", bot),
        ("event_user_is_bot_by", bot),
        ("event_user_is_anonymous", "true" if is_anonymous else "false"),
        ("page_id", str(page_id)),
        ("page_title_historical", title),
        ("page_title", title),
        ("page_namespace_historical", str(namespace)),
        ("page_namespace", str(namespace)),
        ("page_namespace_is_content_historical", content),
        ("page_namespace_is_content", content),
        ("revision_id", "" if revision_id is None else str(revision_id)),
        ("revision_text_bytes_diff", "" if byte_delta is None else str(byte_delta)),
        ("revision_is_identity_revert", "true" if is_identity_revert else "false"),
        ("revision_is_identity_reverted", "false"),
        ("revision_minor_edit", "false"),
    ):
        row[_COLUMN_POS[col]] = value
    return "\t".join(row)


_COLUMN_POS = {c: i for i, c in enumerate(COLUMNS)}


def format_event(event: RevisionEvent, wiki_db: str | None = None, revision_id: int | None = None) -> str:
    """Serialize an event back to a dump line that re-parses to the same event."""
    return format_record(
        timestamp_utc=event.timestamp_utc,
        user_id=event.user_id,
        is_anonymous=event.user_kind is UserKind.ANONYMOUS,
        is_bot=event.user_kind is UserKind.BOT,
        page_id=event.page_id,
        is_identity_revert=event.is_identity_revert,
        byte_delta=event.byte_delta,
        wiki_db=wiki_db or f"{event.language}wiki",
        revision_id=revision_id,
    )
