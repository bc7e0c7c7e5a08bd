import numpy as np
import pytest

from station_pulse.ingest import Dataset, StationMeta, StationSeries, TimeGrid
from station_pulse.synth import ArchetypeSpec, benchmark_set, default_grid

FLAGSHIP_KINDS = ("reliable", "overstressed", "connector", "cryo_small_tank")

_criteria = []


def make_dataset(rows, start="2018-10-01T00:00:00+00:00", observed=None, coords=None):
    """Small helper: a fully observed dataset from a list of value rows."""
    from station_pulse.ingest import parse_timestamp

    rows = np.asarray(rows, dtype=float)
    grid = TimeGrid(parse_timestamp(start), rows.shape[1])
    stations = []
    for i, row in enumerate(rows):
        lat, lon = coords[i] if coords is not None else (34.0 + 0.1 * i, -118.0 - 0.1 * i)
        obs = np.ones(len(row), bool) if observed is None else observed[i]
        stations.append(StationSeries(StationMeta(f"S{i:02d}", f"station {i}", lat, lon, None), row, obs))
    return Dataset(grid, tuple(stations))


@pytest.fixture(scope="session")
def flagship():
    """4 archetypes x 8 series, 2208 h, noise 0.05, seed 7."""
    specs = [ArchetypeSpec(k, 8, 0.05, 7, default_grid(2208)) for k in FLAGSHIP_KINDS]
    return benchmark_set(specs)


@pytest.fixture(scope="session")
def two_archetypes():
    specs = [ArchetypeSpec(k, 8, 0.05, 3, default_grid(2208)) for k in ("reliable", "overstressed")]
    return benchmark_set(specs)


@pytest.fixture
def record_criterion():
    def record(name, passed, detail=""):
        _criteria.append((name, passed, detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _criteria:
        status = "PASS" if passed is True else ("SKIP" if passed is None else "FAIL")
        terminalreporter.write_line(f"[{status}] {name}  {detail}")
