"""Labelled synthetic station traces for benchmarking the clustering.

Five behaviour archetypes, all in normalized units (1.0 = full tank):

``reliable``
    Daily sawtooth: refilled to 1.0 once per ``refill_period_h``, drawn down
    linearly to about 0.4, with a small diurnal ripple.
``overstressed``
    Drawn down at ``drawdown_rate`` per hour to ``depletion_floor`` several
    times a day; each refill arrives after a random 2-6 h wait.
``connector``
    Sits near 0.95 with at most two small draws per week.
``cryo_small_tank``
    Full-amplitude cycling every ``cycle_period_h`` hours (a small dispensing
    tank fed from a larger store).
``downtime``
    The reliable pattern with one contiguous flat stretch of
    ``downtime_span_h`` hours where the last reading is repeated.

These shapes are a verification instrument. They are not fitted to any real
station data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .exceptions import ParameterError
from .ingest import Dataset, StationMeta, StationSeries, TimeGrid

KINDS = ("reliable", "overstressed", "connector", "cryo_small_tank", "downtime")
KIND_ALIASES = {"cryo": "cryo_small_tank"}

DEFAULT_PARAMS = {
    "reliable": {"refill_period_h": 24, "low_level": 0.4, "ripple": 0.03, "phase_jitter_h": 2},
    "overstressed": {"drawdown_rate": 0.15, "depletion_floor": 0.05, "delay_h": (2, 6)},
    "connector": {"level": 0.95, "max_draws_per_week": 2, "draw_size": (0.05, 0.2), "draw_hours": (4, 12)},
    "cryo_small_tank": {"cycle_period_h": 3, "phase_jitter_h": 0},
    "downtime": {"refill_period_h": 24, "low_level": 0.4, "ripple": 0.03, "phase_jitter_h": 2,
                 "downtime_span_h": 168},
}

# California bounding box (lat, lon)
CA_LAT = (32.5, 42.0)
CA_LON = (-124.4, -114.1)
CLAMP = (0.0, 1.2)


def default_grid(hours: int = 2208) -> TimeGrid:
    return TimeGrid(datetime(2018, 10, 1, tzinfo=timezone.utc), hours)


@dataclass(frozen=True)
class ArchetypeSpec:
    kind: str
    n_series: int = 8
    noise_sigma: float = 0.05
    seed: int = 0
    grid: TimeGrid = field(default_factory=default_grid)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        kind = KIND_ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ParameterError(f"unknown archetype kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if int(self.n_series) != self.n_series or self.n_series < 1:
            raise ParameterError(f"n_series must be a positive integer, got {self.n_series}")
        if not 0 <= self.noise_sigma < 0.5:
            raise ParameterError(f"noise_sigma must lie in [0, 0.5), got {self.noise_sigma}")
        unknown = set(self.params) - set(DEFAULT_PARAMS[kind])
        if unknown:
            raise ParameterError(f"unknown params for {kind}: {sorted(unknown)}")
        p = self.resolved_params
        if kind == "downtime" and not 0 < p["downtime_span_h"] < self.grid.n_steps:
            raise ParameterError("downtime_span_h must be positive and shorter than the grid")
        for key in ("refill_period_h", "cycle_period_h"):
            if key in p and p[key] < 2:
                raise ParameterError(f"{key} must be at least 2 hours")

    @property
    def resolved_params(self) -> dict:
        return {**DEFAULT_PARAMS[self.kind], **self.params}


def _sawtooth(n, hour_of_day, p, phase):
    period = p["refill_period_h"]
    pos = (np.arange(n) + phase) % period
    level = 1.0 - (1.0 - p["low_level"]) * pos / (period - 1)
    return level + p["ripple"] * np.sin(2 * np.pi * hour_of_day / 24.0)


def _overstressed(n, p, rng):
    out = np.empty(n)
    rate, floor = p["drawdown_rate"], p["depletion_floor"]
    lo, hi = p["delay_h"]
    level = rng.uniform(floor, 1.0)
    wait = 0
    for t in range(n):
        if wait > 0:
            wait -= 1
            if wait == 0:
                level = 1.0
        out[t] = level
        if wait == 0 and level <= floor:
            wait = int(rng.integers(lo, hi + 1))
        elif wait == 0:
            level = max(floor, level - rate)
    return out


def _connector(n, p, rng):
    out = np.full(n, float(p["level"]))
    for week_start in range(0, n, 168):
        span = min(168, n - week_start)
        for _ in range(int(rng.integers(0, p["max_draws_per_week"] + 1))):
            start = week_start + int(rng.integers(span))
            length = int(rng.integers(p["draw_hours"][0], p["draw_hours"][1] + 1))
            out[start : start + length] -= rng.uniform(*p["draw_size"])
    return out


def _cryo(n, p, phase):
    period = p["cycle_period_h"]
    pos = (np.arange(n) + phase) % period
    return 1.0 - pos / (period - 1)


def _shape(spec, p, rng, hour_of_day):
    n = spec.grid.n_steps
    kind = spec.kind
    if kind in ("reliable", "downtime"):
        x = _sawtooth(n, hour_of_day, p, int(rng.integers(0, p["phase_jitter_h"] + 1)))
        if kind == "downtime":
            span = p["downtime_span_h"]
            start = int(rng.integers(1, n - span + 1))
            x[start : start + span] = x[start - 1]
        return x
    if kind == "overstressed":
        return _overstressed(n, p, rng)
    if kind == "connector":
        return _connector(n, p, rng)
    return _cryo(n, p, int(rng.integers(0, p["phase_jitter_h"] + 1)))


def generate(spec: ArchetypeSpec):
    """Generate ``spec.n_series`` labelled stations of one archetype.

    Returns ``(Dataset, labels)`` where every label is ``spec.kind``. The
    output depends only on the spec: each kind draws from its own seeded
    stream, so different kinds sharing a seed do not share coordinates or
    phases.
    """
    p = spec.resolved_params
    ss = np.random.SeedSequence(spec.seed, spawn_key=(KINDS.index(spec.kind),))
    shape_ss, noise_ss, coord_ss = ss.spawn(3)
    shape_rng = np.random.default_rng(shape_ss)
    noise_rng = np.random.default_rng(noise_ss)
    coord_rng = np.random.default_rng(coord_ss)

    n = spec.grid.n_steps
    hour_of_day = (spec.grid.start.hour + np.arange(n)) % 24
    pool = np.column_stack([
        coord_rng.uniform(*CA_LAT, spec.n_series),
        coord_rng.uniform(*CA_LON, spec.n_series),
    ])
    pool = pool[coord_rng.permutation(spec.n_series)]

    stations = []
    for i in range(spec.n_series):
        x = _shape(spec, p, shape_rng, hour_of_day)
        if spec.noise_sigma > 0:
            x = x + noise_rng.normal(0.0, spec.noise_sigma, n)
        x = np.clip(x, *CLAMP)
        sid = f"{spec.kind}-{i:03d}"
        meta = StationMeta(sid, f"{spec.kind} {i}", float(pool[i, 0]), float(pool[i, 1]), None)
        stations.append(StationSeries(meta, x, np.ones(n, dtype=bool)))
    return Dataset(spec.grid, tuple(stations)), [spec.kind] * spec.n_series


def benchmark_set(archetypes):
    """Combine several archetype specs into one dataset, interleaving kinds round-robin."""
    archetypes = list(archetypes)
    if not archetypes:
        raise ParameterError("no archetypes given")
    grid = archetypes[0].grid
    if any(a.grid != grid for a in archetypes):
        raise ParameterError("all archetype specs must share one grid")
    parts = [generate(a) for a in archetypes]
    stations, labels = [], []
    longest = max(len(ds) for ds, _ in parts)
    for i in range(longest):
        for ds, lab in parts:
            if i < len(ds):
                stations.append(ds.stations[i])
                labels.append(lab[i])
    ids = [s.station_id for s in stations]
    if len(set(ids)) != len(ids):
        raise ParameterError("archetype specs produce duplicate station ids; use distinct kinds")
    return Dataset(grid, tuple(stations)), labels


def parse_kinds(text: str) -> list[tuple[str, int]]:
    """Parse ``reliable:8,overstressed:8`` into ``[("reliable", 8), ...]``."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        kind, _, count = item.partition(":")
        try:
            out.append((KIND_ALIASES.get(kind, kind), int(count) if count else 8))
        except ValueError:
            raise ParameterError(f"bad kind spec {item!r}") from None
    if not out:
        raise ParameterError("no kinds given")
    return out
