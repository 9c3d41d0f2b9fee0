"""Trip parsing, cleansing, and aggregation into hourly daily curves.

Raw trip files are delimited text with a header row.  Column names are
supplied through a schema map so that differently-labelled exports can be
ingested without code changes.  Aggregation produces, for every terminal
and every date on or after the terminal's first active date, a 24-point
hourly count curve of one of three kinds: pickup, dropoff, or usage
(pickup + dropoff).
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

HOUR_COLS = [f"h{i}" for i in range(24)]

CURVE_KINDS = ("usage", "pickup", "dropoff")

_TIME_FORMATS = (
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%dT%H:%M:%S",
    "%m/%d/%Y %H:%M:%S",
    "%m/%d/%Y %H:%M",
)


class SchemaError(ValueError):
    """A required column is missing from the input file."""


@dataclass(frozen=True)
class TripRecord:
    pickup_time: datetime
    dropoff_time: datetime
    origin_terminal: str
    dest_terminal: str

    @property
    def duration_seconds(self) -> int:
        return int((self.dropoff_time - self.pickup_time).total_seconds())


@dataclass(frozen=True)
class Terminal:
    id: str
    latitude: float
    longitude: float
    first_active_date: date | None = None

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude out of range: {self.latitude}")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude out of range: {self.longitude}")


@dataclass
class RowError:
    line: int
    reason: str


@dataclass
class ParseResult:
    trips: list[TripRecord]
    errors: list[RowError] = field(default_factory=list)

    @property
    def n_errors(self) -> int:
        return len(self.errors)


def _parse_timestamp(raw: str) -> datetime:
    raw = raw.strip()
    for fmt in _TIME_FORMATS:
        try:
            return datetime.strptime(raw, fmt)
        except ValueError:
            continue
    raise ValueError(f"unparseable timestamp: {raw!r}")


def parse_trips(source, schema_map: Mapping[str, str]) -> ParseResult:
    """Parse a delimited trip file into trip records.

    ``source`` is a path, a text stream, or a byte stream.  ``schema_map``
    maps the logical names ``pickup_time``, ``dropoff_time``,
    ``origin_terminal``, ``dest_terminal`` to the file's column names.
    Malformed rows are collected with line numbers, never silently
    dropped.
    """
    required = ("pickup_time", "dropoff_time", "origin_terminal", "dest_terminal")
    missing = [k for k in required if k not in schema_map]
    if missing:
        raise SchemaError(f"schema_map missing keys: {missing}")

    close = False
    if isinstance(source, (str, os.PathLike)):
        fh = open(source, "r", newline="")
        close = True
    elif isinstance(source, (bytes, bytearray)):
        fh = io.StringIO(source.decode("utf-8"))
    elif hasattr(source, "read"):
        data = source.read()
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        fh = io.StringIO(data)
    else:
        raise TypeError(f"unsupported source type: {type(source)}")

    try:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError("input has no header row")
        for logical in required:
            if schema_map[logical] not in reader.fieldnames:
                raise SchemaError(
                    f"column {schema_map[logical]!r} (for {logical}) not in header"
                )
        trips: list[TripRecord] = []
        errors: list[RowError] = []
        for row in reader:
            line = reader.line_num
            try:
                pickup = _parse_timestamp(row[schema_map["pickup_time"]])
                dropoff = _parse_timestamp(row[schema_map["dropoff_time"]])
            except (ValueError, TypeError) as exc:
                errors.append(RowError(line, str(exc)))
                continue
            origin = (row[schema_map["origin_terminal"]] or "").strip()
            dest = (row[schema_map["dest_terminal"]] or "").strip()
            if not origin or not dest:
                errors.append(RowError(line, "empty terminal id"))
                continue
            if dropoff < pickup:
                errors.append(RowError(line, "dropoff before pickup"))
                continue
            trips.append(TripRecord(pickup, dropoff, origin, dest))
        return ParseResult(trips, errors)
    finally:
        if close:
            fh.close()


def parse_stations(source, schema_map: Mapping[str, str] | None = None) -> list[Terminal]:
    """Parse the station metadata file (id, latitude, longitude)."""
    schema_map = schema_map or {"id": "id", "latitude": "latitude", "longitude": "longitude"}
    df = pd.read_csv(source, dtype={schema_map["id"]: str})
    for key in ("id", "latitude", "longitude"):
        if schema_map[key] not in df.columns:
            raise SchemaError(f"station file missing column {schema_map[key]!r}")
    return [
        Terminal(str(r[schema_map["id"]]), float(r[schema_map["latitude"]]),
                 float(r[schema_map["longitude"]]))
        for _, r in df.iterrows()
    ]


def cleanse_trips(
    trips: Sequence[TripRecord],
    min_duration_s: int = 60,
    prior_history: Sequence[TripRecord] | None = None,
) -> tuple[list[TripRecord], dict[str, date]]:
    """Drop implausibly short trips and derive first-active dates.

    Trips strictly shorter than ``min_duration_s`` are removed (false
    starts; idempotent on pre-filtered data).  The first active date of a
    terminal is its earliest appearance as a pickup origin or dropoff
    destination across the prior history and the retained trips.
    """
    if min_duration_s < 0:
        raise ValueError("min_duration_s must be >= 0")
    kept = [t for t in trips if t.duration_seconds >= min_duration_s]
    first_active: dict[str, date] = {}

    def _note(terminal: str, d: date) -> None:
        cur = first_active.get(terminal)
        if cur is None or d < cur:
            first_active[terminal] = d

    for t in list(prior_history or []) + kept:
        _note(t.origin_terminal, t.pickup_time.date())
        _note(t.dest_terminal, t.dropoff_time.date())
    return kept, first_active


def _empty_curves() -> pd.DataFrame:
    return pd.DataFrame(columns=["terminal", "date", "kind"] + HOUR_COLS)


def aggregate_daily_curves(
    trips: Sequence[TripRecord],
    kind: str,
    date_range: tuple[date, date],
    first_active: Mapping[str, date] | None = None,
) -> pd.DataFrame:
    """Aggregate trips into hourly daily curves of the requested kind.

    Returns a frame with columns terminal, date, kind, h0..h23.  Every
    (terminal, date) with date >= the terminal's first active date gets a
    row, all-zero when nothing happened; dates before first activity are
    omitted.  Pickup curves bin by pickup time at the origin terminal,
    dropoff curves by dropoff time at the destination, usage is their
    elementwise sum.
    """
    if kind not in CURVE_KINDS:
        raise ValueError(f"kind must be one of {CURVE_KINDS}")
    start, end = date_range
    if end < start:
        raise ValueError("date_range end before start")

    if first_active is None:
        _, first_active = cleanse_trips(trips, min_duration_s=0)

    counts: dict[tuple[str, date], np.ndarray] = {}

    def _bump(terminal: str, when: datetime) -> None:
        d = when.date()
        if d < start or d > end:
            return
        fa = first_active.get(terminal)
        if fa is None or d < fa:
            return
        key = (terminal, d)
        vec = counts.get(key)
        if vec is None:
            vec = counts[key] = np.zeros(24, dtype=np.int64)
        vec[when.hour] += 1

    for t in trips:
        if kind in ("pickup", "usage"):
            _bump(t.origin_terminal, t.pickup_time)
        if kind in ("dropoff", "usage"):
            _bump(t.dest_terminal, t.dropoff_time)

    rows = []
    n_days = (end - start).days + 1
    all_dates = [start + timedelta(days=i) for i in range(n_days)]
    for terminal in sorted(first_active):
        fa = first_active[terminal]
        for d in all_dates:
            if d < fa:
                continue
            vec = counts.get((terminal, d))
            if vec is None:
                vec = np.zeros(24, dtype=np.int64)
            rows.append((terminal, d, kind, *vec))
    if not rows:
        return _empty_curves()
    return pd.DataFrame(rows, columns=["terminal", "date", "kind"] + HOUR_COLS)


def terminal_summary(curves: pd.DataFrame) -> pd.DataFrame:
    """Per-terminal totals: total usage, active days, mean annual usage.

    Mean annual usage divides total usage by active years, where one year
    is 365.25 active days.
    """
    if len(curves) and not (curves["kind"] == "usage").all():
        raise ValueError("terminal_summary expects usage curves")
    if not len(curves):
        return pd.DataFrame(columns=["terminal", "total_usage", "active_days",
                                     "mean_annual_usage"])
    totals = curves[HOUR_COLS].sum(axis=1)
    df = pd.DataFrame({"terminal": curves["terminal"], "total": totals})
    grouped = df.groupby("terminal", sort=True).agg(
        total_usage=("total", "sum"), active_days=("total", "size"))
    grouped["mean_annual_usage"] = (
        grouped["total_usage"] / (grouped["active_days"] / 365.25))
    return grouped.reset_index()


def write_curve_store(curves: pd.DataFrame, directory: str | os.PathLike) -> list[str]:
    """Write curves to disk, one CSV per kind per year.

    Files are named ``curves_<kind>_<year>.csv`` with columns
    terminal, date, kind, h0..h23 sorted by (terminal, date); the layout
    is stable across runs.
    """
    os.makedirs(directory, exist_ok=True)
    paths = []
    if not len(curves):
        return paths
    years = pd.to_datetime(curves["date"]).dt.year
    for (kind, year), chunk in curves.groupby([curves["kind"], years], sort=True):
        chunk = chunk.sort_values(["terminal", "date"], kind="mergesort")
        path = os.path.join(directory, f"curves_{kind}_{year}.csv")
        chunk.to_csv(path, index=False)
        paths.append(path)
    return paths


def read_curve_store(directory: str | os.PathLike, kind: str | None = None) -> pd.DataFrame:
    """Read back curves written by :func:`write_curve_store`."""
    frames = []
    for name in sorted(os.listdir(directory)):
        if not (name.startswith("curves_") and name.endswith(".csv")):
            continue
        if kind is not None and name.split("_")[1] != kind:
            continue
        df = pd.read_csv(os.path.join(directory, name), dtype={"terminal": str})
        df["date"] = pd.to_datetime(df["date"]).dt.date
        frames.append(df)
    if not frames:
        return _empty_curves()
    return pd.concat(frames, ignore_index=True)


def curves_as_matrix(curves: pd.DataFrame) -> tuple[np.ndarray, pd.DataFrame]:
    """Split a curve frame into an (n, 24) float matrix and its key columns."""
    keys = curves[[c for c in curves.columns if c not in HOUR_COLS]].reset_index(drop=True)
    return curves[HOUR_COLS].to_numpy(dtype=float), keys
