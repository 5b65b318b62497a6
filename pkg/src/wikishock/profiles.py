"""Language profiles and changepoint pairs."""

from __future__ import annotations

import datetime as dt
import enum
import math
from dataclasses import dataclass, field
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError


class SizeClass(str, enum.Enum):
    LARGE = "Large"
    MEDIUM = "Medium"
    SMALL = "Small"


LARGE_MIN_EDITS = 5_000_000
MEDIUM_MIN_EDITS = 1_500_000


def classify_size(edits_2019: int) -> SizeClass:
    """Size class from the number of article edits made in 2019."""
    if edits_2019 > LARGE_MIN_EDITS:
        return SizeClass.LARGE
    if edits_2019 >= MEDIUM_MIN_EDITS:
        return SizeClass.MEDIUM
    return SizeClass.SMALL


@dataclass(frozen=True)
class ChangepointPair:
    mobility_date: dt.date
    normality_date: dt.date | None = None

    def __post_init__(self):
        if self.normality_date is not None and self.normality_date <= self.mobility_date:
            raise ValueError(
                f"normality date {self.normality_date} must be after mobility date {self.mobility_date}"
            )

    def shifted(self, days: int) -> ChangepointPair:
        """Move the mobility date by ``days``; the normality date is dropped if it no longer follows."""
        mob = self.mobility_date + dt.timedelta(days=days)
        norm = self.normality_date
        if norm is not None and norm <= mob:
            norm = None
        return ChangepointPair(mob, norm)

    def to_json(self) -> dict:
        return {
            "mobility_date": self.mobility_date.isoformat(),
            "normality_date": self.normality_date.isoformat() if self.normality_date else None,
        }

    @classmethod
    def from_json(cls, obj: dict) -> ChangepointPair:
        norm = obj.get("normality_date")
        return cls(
            dt.date.fromisoformat(obj["mobility_date"]),
            dt.date.fromisoformat(norm) if norm else None,
        )


@dataclass(frozen=True)
class LanguageProfile:
    """One Wikipedia language edition.

    ``mobility_countries`` holds ``(country_code, population)`` pairs; the
    populations only matter relative to each other.
    """

    code: str
    timezone: str = "UTC"
    size_class: SizeClass = SizeClass.SMALL
    mobility_countries: tuple[tuple[str, float], ...] = ()
    changepoint_override: ChangepointPair | None = None
    dumps: tuple[str, ...] = field(default=(), compare=False)
    exclusion_list: str | None = field(default=None, compare=False)

    def __post_init__(self):
        try:
            ZoneInfo(self.timezone)
        except (ZoneInfoNotFoundError, ValueError) as exc:
            raise ValueError(f"{self.code}: unknown timezone {self.timezone!r}") from exc
        for cc, pop in self.mobility_countries:
            if not (math.isfinite(pop) and pop > 0):
                raise ValueError(f"{self.code}: population weight for {cc} must be positive and finite")

    @property
    def wiki_db(self) -> str:
        return f"{self.code}wiki"

    @property
    def is_utc(self) -> bool:
        return self.timezone in ("UTC", "Etc/UTC", "Etc/Universal", "Universal", "Zulu", "Etc/Zulu")

    def country_weights(self) -> dict[str, float]:
        """Population weights normalized to sum to one."""
        total = sum(p for _, p in self.mobility_countries)
        return {cc: p / total for cc, p in self.mobility_countries}

    def check_size_class(self, edits_2019: int) -> bool:
        return classify_size(edits_2019) == self.size_class
