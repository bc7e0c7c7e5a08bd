"""Complexity-invariant distance (CID) and pairwise distance matrices.

CID multiplies the Euclidean distance between two equal-length series by a
correction factor ``max(CE) / min(CE)``, where the complexity estimate CE is
the root of the summed squared first differences. A flat series matched
against a jagged one is therefore pushed away even if their pointwise gap is
small.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from .exceptions import LengthError, ParseError, ShapeError, ValidationError
from .ingest import Dataset

Metric = Literal["cid", "euclidean"]
METRICS = ("cid", "euclidean")

# complexity estimates below this are treated as zero
CE_EPS = 1e-12


def _as_series(x, name="series"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {x.shape}")
    if x.size < 2:
        raise LengthError(f"{name} needs at least 2 points, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{name} contains non-finite values")
    return x


_TINY = np.finfo(float).tiny


def _root_sum_squares(d, axis=-1):
    """``sqrt(sum(d**2))`` along ``axis``.

    Rows whose sum of squares underflows or overflows are recomputed after
    scaling by their largest magnitude; other rows are the plain formula.
    """
    d = np.asarray(d, dtype=float)
    with np.errstate(over="ignore", under="ignore"):
        ss = np.sum(d * d, axis=axis)
    out = np.sqrt(ss)
    bad = ((ss < _TINY) & (ss >= 0)) | ~np.isfinite(ss)
    if np.any(bad):
        m = np.max(np.abs(d), axis=axis)
        safe = np.where(m > 0, m, 1.0)
        scaled = np.expand_dims(safe, axis) if d.ndim > 1 else safe
        u = d / scaled
        fixed = m * np.sqrt(np.sum(u * u, axis=axis))
        out = np.where(bad & (m > 0), fixed, out)
    return out


def complexity_estimate(x) -> float:
    """Root of summed squared consecutive differences of ``x``."""
    x = _as_series(x)
    return float(_root_sum_squares(np.diff(x)))


def correction_factor(ce_a, ce_b):
    """``max/min`` complexity ratio, vectorized.

    Both below ``CE_EPS`` gives 1; exactly one below clamps the denominator
    to ``CE_EPS``.
    """
    ce_a = np.asarray(ce_a, dtype=float)
    ce_b = np.asarray(ce_b, dtype=float)
    hi = np.maximum(ce_a, ce_b)
    lo = np.maximum(np.minimum(ce_a, ce_b), CE_EPS)
    return np.where(hi < CE_EPS, 1.0, hi / lo)


def euclidean(q, c) -> float:
    q, c = _pair(q, c)
    return float(_root_sum_squares(q - c))


def _pair(q, c):
    q = _as_series(q, "q")
    c = _as_series(c, "c")
    if q.shape != c.shape:
        raise ShapeError(f"length mismatch: {q.size} vs {c.size}")
    return q, c


def cid(q, c) -> float:
    """Complexity-invariant distance between two equal-length series."""
    q, c = _pair(q, c)
    ed = _root_sum_squares(q - c)
    cf = correction_factor(complexity_estimate(q), complexity_estimate(c))
    return float(ed * cf)


def row_complexity(X) -> np.ndarray:
    """Complexity estimate of every row of a 2-D array."""
    return _root_sum_squares(np.diff(np.asarray(X, dtype=float), axis=1), axis=1)


def cross_distances(X, Y, metric: Metric = "cid", ce_x=None, ce_y=None) -> np.ndarray:
    """``(len(X), len(Y))`` matrix of distances between rows of X and rows of Y.

    Vectorized; used by the clustering loops. ``ce_x``/``ce_y`` can pass
    precomputed complexity estimates.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    ed = np.empty((len(X), len(Y)))
    # bound the (rows, len(Y), n_steps) temporary to a few million floats
    step = max(1, 4_000_000 // max(1, Y.size))
    for lo in range(0, len(X), step):
        diff = X[lo : lo + step, None, :] - Y[None, :, :]
        ed[lo : lo + step] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if metric == "euclidean":
        return ed
    ce_x = row_complexity(X) if ce_x is None else ce_x
    ce_y = row_complexity(Y) if ce_y is None else ce_y
    return ed * correction_factor(ce_x[:, None], ce_y[None, :])


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    d: np.ndarray
    metric_tag: str
    station_ids: tuple[str, ...]

    def __post_init__(self):
        d = np.array(self.d, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ShapeError(f"distance matrix must be square, got {d.shape}")
        if len(self.station_ids) != d.shape[0]:
            raise ShapeError("station_ids length does not match matrix size")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValidationError("distances must be finite and non-negative")
        if not np.array_equal(d, d.T):
            raise ValidationError("distance matrix is not symmetric")
        if np.any(np.diag(d) != 0):
            raise ValidationError("distance matrix diagonal must be zero")
        d.setflags(write=False)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "station_ids", tuple(self.station_ids))

    @property
    def n(self) -> int:
        return self.d.shape[0]


def pairwise_matrix(ds: Dataset, metric: Metric = "cid") -> DistanceMatrix:
    """Dense symmetric matrix of ``metric`` over all station pairs.

    Each upper-triangle cell is one independent evaluation of the pair
    formula; the lower triangle is a copy.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if len(ds) < 2:
        raise ValidationError("need at least 2 stations for a distance matrix")
    X = ds.values
    for s, row in zip(ds.stations, X):
        if not np.all(np.isfinite(row)):
            raise ValidationError(f"station {s.station_id!r} has non-finite values", s.station_id)
    n = len(X)
    ce = row_complexity(X) if metric == "cid" else None
    d = np.zeros((n, n))
    for i in range(n - 1):
        for j in range(i + 1, n):
            val = _root_sum_squares(X[i] - X[j])
            if metric == "cid":
                val = val * correction_factor(ce[i], ce[j])
            d[i, j] = d[j, i] = val
    return DistanceMatrix(d, metric, tuple(ds.station_ids))


def write_matrix_csv(dm: DistanceMatrix, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["station_id", *dm.station_ids])
        for sid, row in zip(dm.station_ids, dm.d):
            w.writerow([sid, *(repr(float(v)) for v in row)])


def read_matrix_csv(path, metric_tag: str = "cid") -> DistanceMatrix:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path} is empty")
    ids = rows[0][1:]
    body = rows[1:]
    if [r[0] for r in body] != ids:
        raise ParseError("row labels do not match column labels")
    try:
        d = [[float(v) for v in r[1:]] for r in body]
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    return DistanceMatrix(np.array(d), metric_tag, tuple(ids))
