"""Gap filling and per-station normalization.

The array-level work lives in two scikit-learn transformers,
:class:`LinearGapImputer` and :class:`SeriesNormalizer`, operating on
``(n_stations, n_steps)`` matrices with ``nan`` marking gaps. The
``impute_linear`` / ``normalize`` / ``preprocess_all`` functions apply them to
:class:`~station_pulse.ingest.StationSeries` objects.
"""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from .exceptions import (
    AllMissingError,
    DegenerateSeriesError,
    ParameterError,
    StationPulseError,
    StationPulseWarning,
    ValidationError,
)
from .ingest import Dataset, StationSeries

NORMALIZATION_METHODS = ("storage_fraction", "min_max", "z_score")


def _interp_row(values, observed):
    idx = np.flatnonzero(observed)
    if idx.size == 0:
        raise AllMissingError("series has no observed values")
    out = values.astype(float, copy=True)
    gaps = np.flatnonzero(~observed)
    if gaps.size:
        # np.interp holds the edge values constant outside the observed span
        out[gaps] = np.interp(gaps, idx, values[idx])
    return out


def _min_max(row):
    lo, hi = row.min(), row.max()
    if hi == lo:
        return np.full_like(row, 0.5)
    return (row - lo) / (hi - lo)


def _z_score(row):
    std = row.std()
    if std == 0:
        raise DegenerateSeriesError("z_score needs a non-constant series")
    return (row - row.mean()) / std


class LinearGapImputer(TransformerMixin, BaseEstimator):
    """Fill ``nan`` gaps row by row with straight lines between observed neighbours.

    Leading and trailing gaps take the nearest observed value. Stateless:
    ``fit`` only validates input.
    """

    def fit(self, X, y=None):
        check_array(X, ensure_all_finite="allow-nan")
        return self

    def transform(self, X):
        X = check_array(X, ensure_all_finite="allow-nan", copy=True)
        out = np.empty_like(X)
        for i, row in enumerate(X):
            try:
                out[i] = _interp_row(row, ~np.isnan(row))
            except AllMissingError as exc:
                raise AllMissingError(f"row {i}: {exc}") from None
        return out


class SeriesNormalizer(TransformerMixin, BaseEstimator):
    """Rescale each row independently.

    Parameters
    ----------
    method : {"min_max", "storage_fraction", "z_score"}
        ``min_max`` maps each row onto [0, 1] (constant rows become 0.5),
        ``storage_fraction`` divides by the row's rated storage, and
        ``z_score`` standardizes with the population standard deviation.
    storage_kg : array-like of shape (n_rows,), optional
        Rated storage per row, required for ``storage_fraction``. Entries that
        are missing (``nan``/``None``) fall back to ``min_max`` with a warning.
    """

    def __init__(self, method="min_max", storage_kg=None):
        self.method = method
        self.storage_kg = storage_kg

    def fit(self, X, y=None):
        if self.method not in NORMALIZATION_METHODS:
            raise ParameterError(f"unknown normalization method {self.method!r}")
        check_array(X)
        return self

    def transform(self, X):
        if self.method not in NORMALIZATION_METHODS:
            raise ParameterError(f"unknown normalization method {self.method!r}")
        X = check_array(X)
        out = np.empty_like(X)
        if self.method == "storage_fraction":
            storage = self.storage_kg
            if storage is None:
                storage = [None] * len(X)
            storage = np.array([np.nan if s is None else s for s in storage], dtype=float)
            if storage.shape != (len(X),):
                raise ParameterError(f"storage_kg has {storage.size} entries for {len(X)} rows")
        for i, row in enumerate(X):
            if self.method == "min_max":
                out[i] = _min_max(row)
            elif self.method == "z_score":
                try:
                    out[i] = _z_score(row)
                except DegenerateSeriesError as exc:
                    raise DegenerateSeriesError(f"row {i}: {exc}") from None
            elif np.isnan(storage[i]):
                warnings.warn(
                    f"row {i}: no storage_kg, falling back to min_max", StationPulseWarning
                )
                out[i] = _min_max(row)
            else:
                out[i] = row / storage[i]
        return out


def impute_linear(s: StationSeries) -> StationSeries:
    """Return ``s`` with every gap filled; observed values and mask are untouched."""
    try:
        filled = _interp_row(s.values, s.observed)
    except AllMissingError:
        raise AllMissingError(
            f"station {s.station_id!r} has no observed values", s.station_id
        ) from None
    return s.replace_values(filled)


def normalize(s: StationSeries, method: str = "min_max") -> StationSeries:
    if method not in NORMALIZATION_METHODS:
        raise ParameterError(f"unknown normalization method {method!r}")
    if not np.all(np.isfinite(s.values)):
        raise ValidationError(
            f"station {s.station_id!r} has gaps; impute before normalizing", s.station_id
        )
    storage = s.meta.storage_kg
    if method == "storage_fraction" and storage is None:
        warnings.warn(
            f"station {s.station_id!r} has no storage_kg, falling back to min_max",
            StationPulseWarning,
        )
        method = "min_max"
    try:
        out = SeriesNormalizer(method, [storage]).fit_transform(s.values[None, :])[0]
    except DegenerateSeriesError:
        raise DegenerateSeriesError(
            f"station {s.station_id!r} is constant; z_score undefined", s.station_id
        ) from None
    return s.replace_values(out)


def preprocess_all(ds: Dataset, method: str = "min_max") -> Dataset:
    """Impute then normalize every station, preserving order."""
    if len(ds) == 0:
        raise ValidationError("dataset has no stations")
    out = []
    for s in ds.stations:
        try:
            out.append(normalize(impute_linear(s), method))
        except StationPulseError as exc:
            if exc.station_id is None:
                raise type(exc)(f"station {s.station_id!r}: {exc}", s.station_id) from exc
            raise
    return ds.with_stations(out, normalization=method)
