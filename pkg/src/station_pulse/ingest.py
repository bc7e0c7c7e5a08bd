"""Loading hourly capacity readings and station metadata onto a shared grid.

Readings CSV columns: ``timestamp,station_id,capacity_kg`` (ISO-8601, UTC).
Metadata CSV columns: ``station_id,name,lat,lon,storage_kg`` (storage may be blank).

Timestamps are snapped to the nearest hour (``:30`` rounds up). When two
readings land on the same (station, hour) the later row in the file wins.
Station order in the resulting :class:`Dataset` follows the metadata file.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import (
    EmptyInputError,
    ParseError,
    ReferentialError,
    StationPulseWarning,
    ValidationError,
)

HOUR = timedelta(hours=1)
READINGS_COLUMNS = ("timestamp", "station_id", "capacity_kg")
META_COLUMNS = ("station_id", "name", "lat", "lon", "storage_kg")


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 timestamp; naive values are taken as UTC."""
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def snap_to_hour(ts: datetime) -> datetime:
    """Round to the nearest hour boundary."""
    hours = math.floor((ts.timestamp() + 1800.0) / 3600.0)
    return datetime.fromtimestamp(hours * 3600, tz=timezone.utc)


@dataclass(frozen=True)
class TimeGrid:
    start: datetime
    n_steps: int

    def __post_init__(self):
        start = self.start
        if start.tzinfo is None:
            start = start.replace(tzinfo=timezone.utc)
        start = start.astimezone(timezone.utc)
        if start.minute or start.second or start.microsecond:
            raise ValidationError(f"grid start {start.isoformat()} is not on an hour boundary")
        object.__setattr__(self, "start", start)
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ValidationError(f"grid needs at least 2 steps, got {self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def step(self) -> timedelta:
        return HOUR

    @property
    def end(self) -> datetime:
        """Timestamp of the last grid point (inclusive)."""
        return self.start + (self.n_steps - 1) * HOUR

    def timestamp(self, index: int) -> datetime:
        return self.start + index * HOUR

    def index_of(self, ts: datetime) -> int:
        """Grid index of ``ts`` after snapping; may fall outside ``[0, n_steps)``."""
        delta = snap_to_hour(ts) - self.start
        return int(delta // HOUR)

    @classmethod
    def spanning(cls, first: datetime, last: datetime) -> "TimeGrid":
        first, last = snap_to_hour(first), snap_to_hour(last)
        return cls(first, int((last - first) // HOUR) + 1)

    def to_dict(self) -> dict:
        return {"start": format_timestamp(self.start), "n_steps": self.n_steps}

    @classmethod
    def from_dict(cls, data: dict) -> "TimeGrid":
        return cls(parse_timestamp(data["start"]), int(data["n_steps"]))


@dataclass(frozen=True)
class StationMeta:
    station_id: str
    name: str
    lat: float
    lon: float
    storage_kg: float | None = None

    def __post_init__(self):
        if not self.station_id:
            raise ValidationError("station_id must be non-empty")
        if not (math.isfinite(self.lat) and -90.0 <= self.lat <= 90.0):
            raise ValidationError(f"latitude {self.lat} out of range", self.station_id)
        if not (math.isfinite(self.lon) and -180.0 <= self.lon <= 180.0):
            raise ValidationError(f"longitude {self.lon} out of range", self.station_id)
        if self.storage_kg is not None and not (
            math.isfinite(self.storage_kg) and self.storage_kg > 0
        ):
            raise ValidationError(f"storage_kg must be positive, got {self.storage_kg}", self.station_id)

    def to_dict(self) -> dict:
        return {
            "station_id": self.station_id,
            "name": self.name,
            "lat": self.lat,
            "lon": self.lon,
            "storage_kg": self.storage_kg,
        }


def _frozen(a, dtype) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class StationSeries:
    """One station's hourly trace.

    Unobserved positions hold ``nan`` until imputed; imputed positions keep
    ``observed == False``.
    """

    meta: StationMeta
    values: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, float)
        observed = _frozen(self.observed, bool)
        if values.ndim != 1 or values.shape != observed.shape:
            raise ValidationError(
                f"values {values.shape} and observed {observed.shape} must be equal-length 1-D",
                self.meta.station_id,
            )
        if not np.all(np.isfinite(values[observed])):
            raise ValidationError("observed values must be finite", self.meta.station_id)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "observed", observed)

    @property
    def station_id(self) -> str:
        return self.meta.station_id

    def replace_values(self, values) -> "StationSeries":
        return StationSeries(self.meta, values, self.observed)

    def __eq__(self, other):
        if not isinstance(other, StationSeries):
            return NotImplemented
        return (
            self.meta == other.meta
            and np.array_equal(self.observed, other.observed)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Dataset:
    grid: TimeGrid
    stations: tuple[StationSeries, ...]
    normalization: str | None = None

    def __post_init__(self):
        stations = tuple(self.stations)
        object.__setattr__(self, "stations", stations)
        seen = set()
        for s in stations:
            if len(s.values) != self.grid.n_steps:
                raise ValidationError(
                    f"series length {len(s.values)} does not match grid length {self.grid.n_steps}",
                    s.station_id,
                )
            if s.station_id in seen:
                raise ValidationError(f"duplicate station_id {s.station_id!r}", s.station_id)
            seen.add(s.station_id)

    def __len__(self):
        return len(self.stations)

    @property
    def station_ids(self) -> list[str]:
        return [s.station_id for s in self.stations]

    @property
    def metas(self) -> list[StationMeta]:
        return [s.meta for s in self.stations]

    @property
    def values(self) -> np.ndarray:
        """Station-by-hour matrix (copy)."""
        if not self.stations:
            return np.empty((0, self.grid.n_steps))
        return np.vstack([s.values for s in self.stations])

    @property
    def observed(self) -> np.ndarray:
        if not self.stations:
            return np.empty((0, self.grid.n_steps), dtype=bool)
        return np.vstack([s.observed for s in self.stations])

    def with_stations(self, stations: Iterable[StationSeries], normalization=None) -> "Dataset":
        return Dataset(self.grid, tuple(stations), normalization)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.normalization == other.normalization
            and len(self.stations) == len(other.stations)
            and all(a == b for a, b in zip(self.stations, other.stations))
        )

    __hash__ = None


def _read_rows(path, columns, what):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError(f"{what} file {path} is empty") from None
        header = [h.strip() for h in header]
        missing = [c for c in columns if c not in header]
        if missing:
            raise ParseError(f"{what} header missing columns {missing}", line=1)
        positions = [header.index(c) for c in columns]
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=line)
            rows.append((line, [row[p].strip() for p in positions]))
    if not rows:
        raise EmptyInputError(f"{what} file {path} has no data rows")
    return rows


def _parse_float(text, line, name):
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"cannot parse {name} {text!r}", line=line) from None


def load_meta(meta_path) -> list[StationMeta]:
    metas = []
    seen = set()
    for line, (sid, name, lat, lon, storage) in _read_rows(meta_path, META_COLUMNS, "metadata"):
        if sid in seen:
            raise ValidationError(f"line {line}: duplicate station_id {sid!r}", sid)
        seen.add(sid)
        storage_kg = _parse_float(storage, line, "storage_kg") if storage else None
        try:
            metas.append(
                StationMeta(
                    sid,
                    name,
                    _parse_float(lat, line, "lat"),
                    _parse_float(lon, line, "lon"),
                    storage_kg,
                )
            )
        except ValidationError as exc:
            raise ValidationError(f"line {line}: {exc}", sid) from None
    return metas


def load_readings(readings_path, meta_path, grid: TimeGrid | str = "infer") -> Dataset:
    """Load readings and metadata into a :class:`Dataset`.

    ``grid="infer"`` builds the smallest hourly grid spanning every snapped
    reading. With an explicit grid, readings falling outside it are dropped
    with a warning.
    """
    metas = load_meta(meta_path)
    known = {m.station_id for m in metas}

    parsed = []
    for line, (ts_text, sid, cap_text) in _read_rows(readings_path, READINGS_COLUMNS, "readings"):
        try:
            ts = parse_timestamp(ts_text)
        except ValueError:
            raise ParseError(f"cannot parse timestamp {ts_text!r}", line=line) from None
        if sid not in known:
            raise ReferentialError(f"line {line}: unknown station_id {sid!r}", sid)
        capacity = _parse_float(cap_text, line, "capacity_kg")
        if not math.isfinite(capacity) or capacity < 0:
            raise ValidationError(f"line {line}: capacity must be finite and >= 0, got {cap_text}", sid)
        parsed.append((snap_to_hour(ts), sid, capacity))

    if isinstance(grid, str):
        if grid != "infer":
            raise ValueError(f"grid must be a TimeGrid or 'infer', got {grid!r}")
        times = [p[0] for p in parsed]
        grid = TimeGrid.spanning(min(times), max(times))

    row_of = {m.station_id: i for i, m in enumerate(metas)}
    values = np.full((len(metas), grid.n_steps), np.nan)
    observed = np.zeros((len(metas), grid.n_steps), dtype=bool)
    dropped = 0
    for ts, sid, capacity in parsed:
        idx = grid.index_of(ts)
        if not 0 <= idx < grid.n_steps:
            dropped += 1
            continue
        # later rows overwrite earlier ones
        values[row_of[sid], idx] = capacity
        observed[row_of[sid], idx] = True
    if dropped:
        warnings.warn(f"{dropped} readings fall outside the grid and were dropped", StationPulseWarning)

    stations = [StationSeries(m, values[i], observed[i]) for i, m in enumerate(metas)]
    return Dataset(grid, tuple(stations))


def exclude_stations(ds: Dataset, ids: Sequence[str]) -> Dataset:
    """Drop the listed stations; unknown ids produce a warning, not an error."""
    ids = list(ids)
    present = set(ds.station_ids)
    unknown = [i for i in ids if i not in present]
    if unknown:
        warnings.warn(f"unknown station ids ignored: {unknown}", StationPulseWarning)
    drop = set(ids)
    kept = [s for s in ds.stations if s.station_id not in drop]
    if not kept:
        raise EmptyInputError("excluding these stations leaves an empty dataset")
    return Dataset(ds.grid, tuple(kept), ds.normalization)


def write_readings(ds: Dataset, readings_path, meta_path) -> None:
    """Write observed values and metadata back to the CSV formats ``load_readings`` reads."""
    with Path(meta_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(META_COLUMNS)
        for m in ds.metas:
            w.writerow([m.station_id, m.name, repr(m.lat), repr(m.lon),
                        "" if m.storage_kg is None else repr(m.storage_kg)])
    with Path(readings_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(READINGS_COLUMNS)
        for t in range(ds.grid.n_steps):
            stamp = format_timestamp(ds.grid.timestamp(t))
            for s in ds.stations:
                if s.observed[t]:
                    w.writerow([stamp, s.station_id, repr(float(s.values[t]))])


def dataset_to_dict(ds: Dataset) -> dict:
    stations = []
    for s in ds.stations:
        values = [None if math.isnan(v) else v for v in s.values.tolist()]
        stations.append({**s.meta.to_dict(), "values": values, "observed": s.observed.tolist()})
    return {"grid": ds.grid.to_dict(), "normalization": ds.normalization, "stations": stations}


def dataset_from_dict(data: dict) -> Dataset:
    grid = TimeGrid.from_dict(data["grid"])
    stations = []
    for rec in data["stations"]:
        meta = StationMeta(rec["station_id"], rec.get("name", rec["station_id"]),
                           float(rec["lat"]), float(rec["lon"]), rec.get("storage_kg"))
        values = [np.nan if v is None else v for v in rec["values"]]
        stations.append(StationSeries(meta, values, rec["observed"]))
    return Dataset(grid, tuple(stations), data.get("normalization"))


def save_dataset(ds: Dataset, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(dataset_to_dict(ds), fh, allow_nan=False)
        fh.write("\n")


def load_dataset(path) -> Dataset:
    with Path(path).open(encoding="utf-8") as fh:
        return dataset_from_dict(json.load(fh))
