"""Global Moran's I over station locations with a permutation test.

Used to check whether station behaviour at a given hour is spatially
autocorrelated. If it is not, clustering stations as independent series is
justified.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import (
    DegenerateDistanceError,
    ParameterError,
    StationPulseWarning,
    ValidationError,
    ZeroVarianceError,
)
from .ingest import Dataset, StationMeta

EARTH_RADIUS_KM = 6371.0
# timestamp index used for per-station summary statistics
SUMMARY_TIMESTAMP = -1


def haversine_km(a, b) -> float:
    """Great-circle distance in km between ``(lat, lon)`` pairs in degrees."""
    (lat1, lon1), (lat2, lon2) = a, b
    for lat, lon in (a, b):
        if not (-90 <= lat <= 90 and -180 <= lon <= 180):
            raise ValidationError(f"coordinate ({lat}, {lon}) out of range")
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dphi = p2 - p1
    dlmb = math.radians(lon2 - lon1)
    h = math.sin(dphi / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


@dataclass(frozen=True, eq=False)
class SpatialWeights:
    w: np.ndarray
    scheme_tag: str
    row_standardized: bool

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValidationError(f"weights must be square, got {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValidationError("weights must be finite and non-negative")
        if np.any(np.diag(w) != 0):
            raise ValidationError("weights diagonal must be zero")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.w.shape[0]


def parse_scheme(scheme: str):
    """``"inverse_distance"`` or ``"knn:<k>"`` -> ``(name, k)``."""
    if scheme == "inverse_distance":
        return "inverse_distance", None
    name, _, k = scheme.partition(":")
    if name == "knn" and k.isdigit():
        return "knn", int(k)
    raise ParameterError(f"unknown weights scheme {scheme!r}")


def build_weights(metas: Sequence[StationMeta], scheme: str = "inverse_distance",
                  row_standardize: bool = True) -> SpatialWeights:
    """Spatial weights from station coordinates.

    ``scheme`` is ``"inverse_distance"`` (``w = 1/d_km``) or ``"knn:<k>"``
    (binary, each station points at its k nearest; may be asymmetric).
    """
    name, k = parse_scheme(scheme)
    n = len(metas)
    if n < 3:
        raise ParameterError(f"need at least 3 stations for spatial weights, got {n}")
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = haversine_km((metas[i].lat, metas[i].lon), (metas[j].lat, metas[j].lon))
    w = np.zeros((n, n))
    if name == "inverse_distance":
        for i in range(n):
            for j in range(i + 1, n):
                if d[i, j] == 0:
                    raise DegenerateDistanceError(
                        f"stations {metas[i].station_id!r} and {metas[j].station_id!r} coincide"
                    )
                w[i, j] = w[j, i] = 1.0 / d[i, j]
    else:
        if not 1 <= k < n:
            raise ParameterError(f"knn needs 1 <= k < n={n}, got {k}")
        for i in range(n):
            order = np.argsort(np.where(np.arange(n) == i, np.inf, d[i]), kind="stable")
            w[i, order[:k]] = 1.0
    if row_standardize:
        sums = w.sum(axis=1, keepdims=True)
        w = np.divide(w, sums, out=np.zeros_like(w), where=sums > 0)
    return SpatialWeights(w, scheme, row_standardize)


def _moran_batch(Z, W):
    """Moran's I for each row of ``Z`` (rows already centered)."""
    n = W.shape[0]
    num = np.einsum("pi,ij,pj->p", Z, W, Z)
    den = np.einsum("pi,pi->p", Z, Z)
    return (n / W.sum()) * num / den


def _check_x(x, w):
    x = np.asarray(x, dtype=float)
    if x.shape != (w.n,):
        raise ValidationError(f"{x.size} values for {w.n} stations")
    if not np.all(np.isfinite(x)):
        raise ValidationError("values must be finite")
    if np.ptp(x) == 0:
        raise ZeroVarianceError("Moran's I is undefined for a constant vector")
    return x


def morans_i(x, w: SpatialWeights) -> float:
    x = _check_x(x, w)
    z = x - x.mean()
    return float(_moran_batch(z[None, :], w.w)[0])


@dataclass(frozen=True)
class MoranResult:
    timestamp: int
    i_observed: float
    e_i: float
    p_value: float
    n_permutations: int
    window: int = 1  # hours averaged from ``timestamp`` on; 1 means a plain snapshot

    def to_dict(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "window": self.window,
            "i_observed": self.i_observed,
            "e_i": self.e_i,
            "p_value": self.p_value,
            "n_permutations": self.n_permutations,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MoranResult":
        return cls(int(data["timestamp"]), float(data["i_observed"]), float(data["e_i"]),
                   float(data["p_value"]), int(data["n_permutations"]), int(data.get("window", 1)))


def permutation_distribution(x, w: SpatialWeights, n_permutations: int = 999, seed=0) -> np.ndarray:
    """Moran's I under ``n_permutations`` random relabelings of ``x``.

    Permutation ``p`` draws from its own stream seeded by ``(seed, p)``, so
    the result does not depend on evaluation order.
    """
    x = _check_x(x, w)
    if n_permutations < 1:
        raise ParameterError("n_permutations must be >= 1")
    z = x - x.mean()
    Z = np.empty((n_permutations, len(z)))
    for p in range(n_permutations):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(p,)))
        Z[p] = z[rng.permutation(len(z))]
    return _moran_batch(Z, w.w)


def permutation_test(x, w: SpatialWeights, n_permutations: int = 999, seed=0,
                     timestamp: int = 0) -> MoranResult:
    """Two-sided permutation test of Moran's I around ``-1/(N-1)``."""
    i_obs = morans_i(x, w)
    e_i = -1.0 / (w.n - 1)
    perms = permutation_distribution(x, w, n_permutations, seed)
    extreme = int(np.sum(np.abs(perms - e_i) >= abs(i_obs - e_i)))
    p = (1 + extreme) / (n_permutations + 1)
    return MoranResult(timestamp, i_obs, e_i, p, n_permutations)


def evenly_spaced(n_steps: int, count: int) -> list[int]:
    count = min(count, n_steps)
    return sorted(set(int(round(v)) for v in np.linspace(0, n_steps - 1, count)))


def moran_scan(ds: Dataset, w: SpatialWeights, timestamps: Sequence[int],
               n_permutations: int = 999, seed: int = 0, window: int = 1) -> list[MoranResult]:
    """Run :func:`permutation_test` on the cross-station vector at each grid index.

    With ``window > 1`` each station is averaged over ``[t, t + window)``
    instead of read at ``t``. Constant vectors are skipped with a warning.
    Index ``-1`` (``SUMMARY_TIMESTAMP``) tests the per-station mean over the
    whole grid. Each timestamp gets its own seed stream derived from
    ``(seed, index)``.
    """
    timestamps = list(timestamps)
    if not timestamps:
        raise ParameterError("no timestamps to scan")
    if window < 1:
        raise ParameterError(f"window must be >= 1, got {window}")
    if w.n != len(ds):
        raise ValidationError(f"weights cover {w.n} stations, dataset has {len(ds)}")
    X = ds.values
    n_steps = ds.grid.n_steps
    results = []
    for t in timestamps:
        span = window
        if t == SUMMARY_TIMESTAMP:
            x, span = X.mean(axis=1), n_steps
        elif 0 <= t and t + window <= n_steps:
            x = X[:, t] if window == 1 else X[:, t:t + window].mean(axis=1)
        else:
            raise ParameterError(f"interval [{t}, {t + window}) outside grid of {n_steps}")
        if np.ptp(x) == 0:
            warnings.warn(f"snapshot {t} is constant across stations; skipped", StationPulseWarning)
            continue
        # offset keeps the summary index (-1) a valid non-negative entropy word
        r = permutation_test(x, w, n_permutations, [seed, t + 1], timestamp=t)
        results.append(MoranResult(r.timestamp, r.i_observed, r.e_i, r.p_value,
                                   r.n_permutations, span))
    return results
