"""Builds a complete synthetic pipeline workspace (dumps, mobility CSV, config)."""

from __future__ import annotations

import datetime as dt
import json
import math
from pathlib import Path

from wikishock import synth

TIMEZONES = {"aa": "UTC", "bb": "Europe/Rome", "cc": "Asia/Seoul"}
COUNTRIES = {"aa": [["AA", 3.0], ["AX", 1.0]], "bb": [["BB", 1.0]], "cc": [["CC", 1.0]]}
STEP = dt.date(2020, 3, 12)


def build(
    root: Path, intensity=30.0, seed=1, n_windows=8, shock=True, coverage=None, extra=None, max_lines=None
) -> Path:
    """Write the workspace under ``root``; returns the config path.

    ``max_lines`` caps the total number of dump lines; the cut falls at the
    end of the last language's history.
    """
    root = Path(root)
    (root / "data").mkdir(parents=True, exist_ok=True)
    coverage = coverage or (dt.date(2018, 1, 1), dt.date(2020, 12, 31))
    cfg = synth.SynthConfig(
        seed=seed,
        intensity={code: intensity for code in TIMEZONES},
        coverage=coverage,
        timezones=TIMEZONES,
    )
    spec = None
    if shock:
        spec = synth.ShockSpec(STEP, dt.date(2020, 6, 30), math.exp(0.3), {"bb"})
    events, _ = synth.gen_revision_log(cfg, spec)
    if max_lines is not None:
        events = events[:max_lines]
    for code in TIMEZONES:
        synth.write_dump(root / "data" / f"{code}wiki.tsv", [e for e in events if e.language == code])

    mob = {}
    for i, cc in enumerate(("AA", "AX", "BB", "CC")):
        mob[cc] = synth.gen_mobility(
            STEP + dt.timedelta(days=i % 2), -45.0, 1.5, seed + i, n_days=200,
            extra_steps=[(dt.date(2020, 6, 1), 43.0)],
        )
    (root / "data" / "mobility.csv").write_text(synth.google_mobility_csv(mob))

    doc = {
        "schema_version": 1,
        "snapshot": "synthetic",
        "languages": [
            {
                "code": code,
                "timezone": tz,
                "mobility_countries": COUNTRIES[code],
                "dumps": [f"data/{code}wiki.tsv"],
            }
            for code, tz in TIMEZONES.items()
        ],
        "baseline_language": "cc",
        "paths": {"mobility_csv": "data/mobility.csv", "cache_dir": "cache", "output_dir": "out"},
        "coverage": {"start": coverage[0].isoformat(), "end": coverage[1].isoformat()},
        "window": {"n_windows": n_windows},
        "metrics": ["edit_volume", "newcomers", "revert_rate", "byte_delta_sum"],
        "robustness": ["window14", "cp-plus7"],
    }
    doc.update(extra or {})
    path = root / "config.json"
    path.write_text(json.dumps(doc, indent=2))
    return path


def tree_bytes(out: Path) -> dict[str, bytes]:
    return {str(p.relative_to(out)): p.read_bytes() for p in sorted(Path(out).rglob("*")) if p.is_file()}
