"""Event-stream and roster file I/O.

Events are JSON lines ``{"id", "ts", "kind", "category", "amount", "drug_code"}``; the roster is a CSV with
``id, sex, age_years`` followed by one column per buyer persona (blank when missing).
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from ..core.errors import InputValidationError, MissingInputError
from ..core.types import MAX_AGE, MIN_AGE, Event, EventKind, Sex, Shopper, StudyWindow

logger = logging.getLogger(__name__)

EVENT_COLUMNS = ["id", "ts", "kind", "category", "amount", "drug_code"]
ROSTER_BASE_COLUMNS = ["id", "sex", "age_years"]


def empty_events() -> pd.DataFrame:
    frame = pd.DataFrame({c: pd.Series(dtype=object) for c in EVENT_COLUMNS})
    frame["ts"] = pd.Series(dtype="datetime64[ns]")
    frame["amount"] = pd.Series(dtype=float)
    return frame


def read_events(path: str | Path) -> pd.DataFrame:
    """Read a JSON-lines event file into a typed frame.

    Raises:
        MissingInputError: If the file does not exist
        InputValidationError: If columns are missing or values are malformed
    """
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"Event file not found: {path}")
    if path.stat().st_size == 0:
        return empty_events()

    frame = pd.read_json(path, lines=True, dtype=False, convert_dates=False)
    missing = [c for c in EVENT_COLUMNS if c not in frame.columns]
    if missing:
        raise InputValidationError(f"Event file {path} lacks fields: {', '.join(missing)}")

    frame = frame[EVENT_COLUMNS].copy()
    frame["id"] = frame["id"].astype(str)
    try:
        frame["ts"] = pd.to_datetime(frame["ts"], format="%Y-%m-%d")
    except (ValueError, TypeError) as e:
        raise InputValidationError(f"Malformed timestamp in {path}: {e}") from e
    frame["amount"] = frame["amount"].astype(float)
    frame["drug_code"] = frame["drug_code"].where(frame["drug_code"].notna(), None)
    check_event_values(frame)
    logger.info(f"Read {len(frame)} events from {path.name}", extra={"stage": "ingest"})
    return frame


def check_event_values(frame: pd.DataFrame) -> None:
    """Enforce per-event rules: known kind, non-negative amount, zero-amount queries."""
    kinds = set(frame["kind"].unique()) - {k.value for k in EventKind}
    if kinds:
        raise InputValidationError(f"Unknown event kinds: {', '.join(sorted(map(str, kinds)))}")
    if (frame["amount"] < 0).any():
        raise InputValidationError("Event amounts must be non-negative")
    if ((frame["kind"] == EventKind.QUERY.value) & (frame["amount"] != 0)).any():
        raise InputValidationError("Query events must carry a zero amount")


def check_study_year(frame: pd.DataFrame, window: StudyWindow) -> None:
    """Reject non-drug events outside the study year.

    Drug purchases may precede the study; they are exactly what the exclusion rule looks for.
    """
    start = pd.Timestamp(window.observation_start)
    end = pd.Timestamp(window.performance_end)
    outside = frame["drug_code"].isna() & ((frame["ts"] < start) | (frame["ts"] > end))
    if outside.any():
        first = frame.loc[outside].iloc[0]
        raise InputValidationError(
            f"{int(outside.sum())} events fall outside the study year, e.g. shopper {first['id']} "
            f"on {first['ts'].date()}"
        )


def write_events(path: str | Path, events: pd.DataFrame) -> None:
    out = events[EVENT_COLUMNS].copy()
    out["ts"] = np.datetime_as_string(out["ts"].to_numpy(dtype="datetime64[D]"), unit="D")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        if not out.empty:
            f.write(out.to_json(orient="records", lines=True, double_precision=6))
            f.write("\n")


def read_roster(path: str | Path) -> pd.DataFrame:
    """Read the shopper roster CSV.

    Raises:
        MissingInputError: If the file does not exist
        InputValidationError: On missing columns, unknown sex or unsupported ages
    """
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"Roster not found: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [c for c in ROSTER_BASE_COLUMNS if c not in frame.columns]
    if missing:
        raise InputValidationError(f"Roster {path} lacks columns: {', '.join(missing)}")
    try:
        frame["age_years"] = frame["age_years"].astype(int)
    except ValueError as e:
        raise InputValidationError(f"Non-integer age in {path}: {e}") from e
    check_roster_values(frame)
    persona_cols = [c for c in frame.columns if c not in ROSTER_BASE_COLUMNS]
    for col in persona_cols:
        frame[col] = frame[col].where(frame[col] != "", None)
    logger.info(f"Read {len(frame)} shoppers from {path.name}", extra={"stage": "ingest"})
    return frame


def check_roster_values(frame: pd.DataFrame) -> None:
    if frame["id"].duplicated().any():
        raise InputValidationError("Roster shopper ids must be unique")
    bad_sex = set(frame["sex"]) - {s.value for s in Sex}
    if bad_sex:
        raise InputValidationError(f"Unknown sex values: {', '.join(sorted(bad_sex))}")
    ages = frame["age_years"]
    if ((ages < MIN_AGE) | (ages > MAX_AGE)).any():
        bad = int(ages[(ages < MIN_AGE) | (ages > MAX_AGE)].iloc[0])
        raise InputValidationError(f"Age {bad} outside supported range {MIN_AGE}-{MAX_AGE}")


def write_roster(path: str | Path, roster: pd.DataFrame) -> None:
    roster.to_csv(path, index=False, lineterminator="\n")


def persona_columns(roster: pd.DataFrame) -> List[str]:
    return [c for c in roster.columns if c not in ROSTER_BASE_COLUMNS]


def shoppers_from_frames(events: pd.DataFrame, roster: pd.DataFrame) -> List[Shopper]:
    """Materialize Shopper records, keeping each shopper's events in file order."""
    personas = persona_columns(roster)
    by_id: Dict[str, List[Event]] = {}
    for row in events.itertuples(index=False):
        by_id.setdefault(str(row.id), []).append(Event(
            timestamp=row.ts.date(),
            kind=row.kind,
            category=row.category,
            amount=float(row.amount),
            drug_code=row.drug_code if isinstance(row.drug_code, str) else None,
        ))
    shoppers = []
    for rec in roster.to_dict(orient="records"):
        shoppers.append(Shopper(
            id=str(rec["id"]),
            sex=rec["sex"],
            age_years=int(rec["age_years"]),
            events=by_id.get(str(rec["id"]), []),
            personas={p: (rec[p] if isinstance(rec[p], str) else None) for p in personas},
        ))
    return shoppers


def frames_from_shoppers(shoppers: List[Shopper],
                         persona_names: Optional[List[str]] = None) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Inverse of :func:`shoppers_from_frames`."""
    if persona_names is None:
        persona_names = sorted({k for s in shoppers for k in s.personas})
    rows = [
        {"id": s.id, "ts": pd.Timestamp(e.timestamp), "kind": e.kind.value, "category": e.category,
         "amount": e.amount, "drug_code": e.drug_code}
        for s in shoppers for e in s.events
    ]
    events = pd.DataFrame(rows, columns=EVENT_COLUMNS) if rows else empty_events()
    if rows:
        events["ts"] = pd.to_datetime(events["ts"])
    roster = pd.DataFrame(
        [{"id": s.id, "sex": s.sex.value, "age_years": s.age_years,
          **{p: s.personas.get(p) for p in persona_names}} for s in shoppers],
        columns=ROSTER_BASE_COLUMNS + persona_names,
    )
    return events, roster
