"""Clustering of station series under CID or Euclidean distance.

Two estimators follow the scikit-learn API:

* :class:`TimeSeriesKMeans`: Lloyd iterations where the assignment step uses
  the chosen metric and centroids are pointwise means of their members.
* :class:`KMedoids`: alternating k-medoids on a precomputed (or internally
  computed) distance matrix, so centres are always real stations.

The module-level functions (``kmeans_fit``, ``kmedoids_fit``, ``select_k``...)
wrap them for :class:`~station_pulse.ingest.Dataset` inputs and return
immutable :class:`ClusterModel` records.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .distance import METRICS, DistanceMatrix, cross_distances, pairwise_matrix, row_complexity
from .exceptions import ParameterError, ShapeError, UndefinedSilhouetteError
from .ingest import Dataset


def _check_k(k, n):
    if int(k) != k or k < 1:
        raise ParameterError(f"k must be a positive integer, got {k}")
    if k > n:
        raise ParameterError(f"k={k} exceeds the number of stations ({n})")


def _run_rng(seed, run):
    # one independent stream per restart, fixed by (seed, run)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run,)))


def _plusplus_init(n, k, rng, dist_to):
    """k-means++ style seeding. ``dist_to(i)`` returns distances from every point to point i."""
    chosen = [int(rng.integers(n))]
    closest = dist_to(chosen[0])
    while len(chosen) < k:
        weights = closest**2
        total = weights.sum()
        if total > 0 and np.isfinite(total):
            nxt = int(rng.choice(n, p=weights / total))
        else:
            nxt = next(i for i in range(n) if i not in chosen)
        chosen.append(nxt)
        closest = np.minimum(closest, dist_to(nxt))
    return np.array(chosen)


def _canonical(labels, k):
    """Relabel clusters in order of first appearance; returns ``(labels, order)``."""
    first = [int(np.flatnonzero(labels == c)[0]) for c in range(k)]
    order = np.argsort(first, kind="stable")
    remap = np.empty(k, dtype=int)
    remap[order] = np.arange(k)
    return remap[labels], order


def _better(score, best_score):
    # relative margin so rounding noise cannot override the earliest run
    return score < best_score - 1e-9 * abs(best_score)


def pairwise_inertia(D, labels) -> float:
    """Centroid-free k-means objective: ``sum_c sum_{i,j in c} D[i, j]**2 / (2 |c|)``.

    Equals the usual inertia when ``D`` is Euclidean, and stays meaningful
    for CID, where a mean centroid is not the distance minimizer.
    """
    total = 0.0
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        total += float(np.sum(D[np.ix_(idx, idx)] ** 2)) / (2 * idx.size)
    return total


class TimeSeriesKMeans(ClusterMixin, BaseEstimator):
    """k-means for equal-length series with a pluggable assignment metric.

    Parameters
    ----------
    n_clusters : int, default=4
    metric : {"cid", "euclidean"}, default="cid"
        Distance used for seeding and assignment. Centroids are always the
        pointwise mean of their members.
    max_iter : int, default=300
        Cap on Lloyd iterations. The loop stops earlier once assignments
        repeat exactly, or once it returns to any earlier partition (a
        cycle, possible under CID).
    n_init : int, default=10
        Number of seeded restarts. The winner minimizes
        :func:`pairwise_inertia` over the sample distance matrix (earliest
        run on ties). Under CID the centroid-based inertia can favour wrong
        partitions whose mean centroids happen to be sharper.
    random_state : int, default=0

    Attributes
    ----------
    labels_ : ndarray of shape (n_samples,)
        Cluster indices, numbered in order of each cluster's first sample.
    cluster_centers_ : ndarray of shape (n_clusters, n_steps)
    inertia_ : float
        Sum of squared distances from each series to its centroid.
    n_iter_ : int
    inertia_history_ : list of float
        Inertia right after each assignment step of the winning run.
    assign_history_ : list of (float, float)
        Inertia before and after each reassignment, both measured against the
        same centroids.
    """

    def __init__(self, n_clusters=4, metric="cid", max_iter=300, n_init=10, random_state=0):
        self.n_clusters = n_clusters
        self.metric = metric
        self.max_iter = max_iter
        self.n_init = n_init
        self.random_state = random_state

    def _distances(self, X, centers, ce_X):
        return cross_distances(X, centers, self.metric, ce_x=ce_X)

    def _repair_empty(self, X, labels, D, centers, ce_X):
        k = self.n_clusters
        while True:
            counts = np.bincount(labels, minlength=k)
            empty = np.flatnonzero(counts == 0)
            if empty.size == 0:
                return labels, D, centers
            e = empty[0]
            own = D[np.arange(len(X)), labels]
            # only stations whose cluster keeps at least one other member
            movable = counts[labels] > 1
            own = np.where(movable, own, -np.inf)
            far = int(np.argmax(own))
            labels = labels.copy()
            labels[far] = e
            centers = centers.copy()
            centers[e] = X[far]
            D = D.copy()
            D[:, e] = self._distances(X, centers[e : e + 1], ce_X)[:, 0]

    def _single_run(self, X, ce_X, rng):
        n, k = len(X), self.n_clusters
        seeds = _plusplus_init(
            n, k, rng, lambda i: self._distances(X, X[i : i + 1], ce_X)[:, 0]
        )
        centers = X[seeds].copy()
        labels = None
        history, assign_history = [], []
        seen = set()
        n_iter = 0
        for n_iter in range(1, self.max_iter + 1):
            D = self._distances(X, centers, ce_X)
            new = np.argmin(D, axis=1)
            if labels is not None:
                before = float(np.sum(D[np.arange(n), labels] ** 2))
            new, D, centers = self._repair_empty(X, new, D, centers, ce_X)
            after = float(np.sum(D[np.arange(n), new] ** 2))
            if labels is not None:
                assign_history.append((before, after))
            history.append(after)
            if labels is not None and np.array_equal(new, labels):
                break
            key = new.tobytes()
            if key in seen:
                # revisiting an earlier partition: under CID the mean update
                # can cycle, and further iterations would only repeat it
                labels = new
                centers = np.vstack([X[labels == c].mean(axis=0) for c in range(k)])
                break
            seen.add(key)
            labels = new
            centers = np.vstack([X[labels == c].mean(axis=0) for c in range(k)])
        D = self._distances(X, centers, ce_X)
        inertia = float(np.sum(D[np.arange(n), labels] ** 2))
        return labels, centers, inertia, n_iter, history, assign_history

    def fit(self, X, y=None):
        X = check_array(X)
        if self.metric not in METRICS:
            raise ParameterError(f"unknown metric {self.metric!r}")
        _check_k(self.n_clusters, len(X))
        if self.n_init < 1 or self.max_iter < 1:
            raise ParameterError("n_init and max_iter must be >= 1")
        ce_X = row_complexity(X) if self.metric == "cid" else None
        D = cross_distances(X, X, self.metric, ce_x=ce_X, ce_y=ce_X) if self.n_init > 1 else None
        best, best_score = None, np.inf
        for run in range(self.n_init):
            result = self._single_run(X, ce_X, _run_rng(self.random_state, run))
            score = pairwise_inertia(D, result[0]) if D is not None else 0.0
            if best is None or _better(score, best_score):
                best, best_score = result, score
        (labels, centers, self.inertia_, self.n_iter_,
         self.inertia_history_, self.assign_history_) = best
        self.labels_, order = _canonical(labels, self.n_clusters)
        self.cluster_centers_ = centers[order]
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X)
        return np.argmin(cross_distances(X, self.cluster_centers_, self.metric), axis=1)


class KMedoids(ClusterMixin, BaseEstimator):
    """Alternating k-medoids.

    Each round assigns points to their nearest medoid (ties to the lowest
    cluster index) and then moves every medoid to the member with the
    smallest summed distance to its cluster. Stops when no medoid moves.

    Parameters
    ----------
    n_clusters : int, default=4
    metric : {"precomputed", "cid", "euclidean"}, default="precomputed"
        With ``"precomputed"`` ``X`` passed to ``fit`` is a square distance
        matrix.
    max_iter : int, default=300
    n_init : int, default=10
    random_state : int, default=0
    """

    def __init__(self, n_clusters=4, metric="precomputed", max_iter=300, n_init=10, random_state=0):
        self.n_clusters = n_clusters
        self.metric = metric
        self.max_iter = max_iter
        self.n_init = n_init
        self.random_state = random_state

    def _single_run(self, D, rng):
        n, k = len(D), self.n_clusters
        medoids = _plusplus_init(n, k, rng, lambda i: D[:, i])
        n_iter = 0
        for n_iter in range(1, self.max_iter + 1):
            labels = self._assign(D, medoids)
            moved = False
            for c in range(k):
                members = np.flatnonzero(labels == c)
                costs = D[np.ix_(members, members)].sum(axis=1)
                best = members[np.argmin(costs)]
                current_cost = costs[np.flatnonzero(members == medoids[c])[0]]
                if costs.min() < current_cost:
                    medoids[c] = best
                    moved = True
            if not moved:
                break
        labels = self._assign(D, medoids)
        inertia = float(D[np.arange(n), medoids[labels]].sum())
        return medoids, labels, inertia, n_iter

    @staticmethod
    def _assign(D, medoids):
        labels = np.argmin(D[:, medoids], axis=1)
        # medoids always own themselves, even if a duplicate sits at distance 0
        labels[medoids] = np.arange(len(medoids))
        return labels

    def fit(self, X, y=None):
        X = check_array(X)
        if self.metric == "precomputed":
            if X.shape[0] != X.shape[1]:
                raise ShapeError(f"precomputed distances must be square, got {X.shape}")
            D = X
        elif self.metric in METRICS:
            D = cross_distances(X, X, self.metric)
            self.cluster_centers_ = None
        else:
            raise ParameterError(f"unknown metric {self.metric!r}")
        _check_k(self.n_clusters, len(D))
        if self.n_init < 1 or self.max_iter < 1:
            raise ParameterError("n_init and max_iter must be >= 1")
        best = None
        for run in range(self.n_init):
            result = self._single_run(D, _run_rng(self.random_state, run))
            if best is None or _better(result[2], best[2]):
                best = result
        medoids, labels, self.inertia_, self.n_iter_ = best
        self.labels_, order = _canonical(labels, self.n_clusters)
        self.medoid_indices_ = medoids[order]
        if self.metric != "precomputed":
            self.cluster_centers_ = X[self.medoid_indices_].copy()
        return self

    def predict(self, X):
        check_is_fitted(self, "medoid_indices_")
        if self.metric == "precomputed":
            # X holds distances from new points to the training points
            X = check_array(X)
            return np.argmin(X[:, self.medoid_indices_], axis=1)
        return np.argmin(cross_distances(check_array(X), self.cluster_centers_, self.metric), axis=1)


@dataclass(frozen=True, eq=False)
class ClusterModel:
    """Fitted partition of a dataset's stations.

    ``inertia`` is the summed distance from each station to its centroid
    (k-means) or medoid (k-medoids) under ``metric_tag``. The k-means
    ``inertia_history`` tracks the squared form that the Lloyd loop minimizes.
    """

    k: int
    assignments: np.ndarray
    centroids: np.ndarray | None
    inertia: float
    n_iterations: int
    seed: int
    metric_tag: str
    station_ids: tuple[str, ...]
    algo: str = "kmeans"
    medoid_indices: tuple[int, ...] | None = None
    inertia_history: tuple[float, ...] = field(default=())

    def __post_init__(self):
        a = np.array(self.assignments, dtype=int)
        a.setflags(write=False)
        object.__setattr__(self, "assignments", a)
        if self.centroids is not None:
            c = np.array(self.centroids, dtype=float)
            c.setflags(write=False)
            object.__setattr__(self, "centroids", c)
        object.__setattr__(self, "station_ids", tuple(self.station_ids))
        if len(a) != len(self.station_ids):
            raise ShapeError("assignments and station_ids differ in length")
        if set(a.tolist()) != set(range(self.k)):
            raise ParameterError("every cluster index in [0, k) must be used")

    def members(self, cluster: int) -> list[str]:
        return [s for s, c in zip(self.station_ids, self.assignments) if c == cluster]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "metric": self.metric_tag,
            "algo": self.algo,
            "assignments": {s: int(c) for s, c in zip(self.station_ids, self.assignments)},
            "station_order": list(self.station_ids),
            "inertia": self.inertia,
            "n_iterations": self.n_iterations,
            "medoids": None if self.medoid_indices is None else [int(i) for i in self.medoid_indices],
            "centroids": None if self.centroids is None else self.centroids.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClusterModel":
        ids = data.get("station_order") or list(data["assignments"])
        medoids = data.get("medoids")
        return cls(
            k=int(data["k"]),
            assignments=[data["assignments"][s] for s in ids],
            centroids=data.get("centroids"),
            inertia=float(data.get("inertia", 0.0)),
            n_iterations=int(data.get("n_iterations", 0)),
            seed=int(data["seed"]),
            metric_tag=data["metric"],
            station_ids=tuple(ids),
            algo=data.get("algo", "kmeans"),
            medoid_indices=None if medoids is None else tuple(medoids),
        )


def kmeans_fit(ds: Dataset, k: int, seed: int = 0, metric: str = "cid",
               max_iter: int = 300, n_init: int = 10) -> ClusterModel:
    """Fit :class:`TimeSeriesKMeans` on a preprocessed dataset."""
    _check_k(k, len(ds))
    est = TimeSeriesKMeans(k, metric=metric, max_iter=max_iter, n_init=n_init, random_state=seed)
    est.fit(ds.values)
    X = ds.values
    d = cross_distances(X, est.cluster_centers_, metric)
    return ClusterModel(
        k=k,
        assignments=est.labels_,
        centroids=est.cluster_centers_,
        inertia=float(d[np.arange(len(X)), est.labels_].sum()),
        n_iterations=est.n_iter_,
        seed=seed,
        metric_tag=metric,
        station_ids=tuple(ds.station_ids),
        algo="kmeans",
        inertia_history=tuple(est.inertia_history_),
    )


def kmedoids_fit(dm: DistanceMatrix, k: int, seed: int = 0, max_iter: int = 300,
                 n_init: int = 10, ds: Dataset | None = None) -> ClusterModel:
    """Fit :class:`KMedoids` on a distance matrix.

    Pass ``ds`` to have the medoid series recorded as centroids.
    """
    _check_k(k, dm.n)
    est = KMedoids(k, metric="precomputed", max_iter=max_iter, n_init=n_init, random_state=seed)
    est.fit(dm.d)
    centroids = None
    if ds is not None:
        centroids = ds.values[est.medoid_indices_]
    return ClusterModel(
        k=k,
        assignments=est.labels_,
        centroids=centroids,
        inertia=est.inertia_,
        n_iterations=est.n_iter_,
        seed=seed,
        metric_tag=dm.metric_tag,
        station_ids=dm.station_ids,
        algo="kmedoids",
        medoid_indices=tuple(int(i) for i in est.medoid_indices_),
    )


@dataclass(frozen=True, eq=False)
class SilhouetteReport:
    per_station: np.ndarray
    mean: float
    k: int


def silhouette(dm, assignments) -> SilhouetteReport:
    """Silhouette scores on a precomputed distance matrix.

    Members of singleton clusters score 0; a point with ``a == b == 0``
    also scores 0.
    """
    D = dm.d if isinstance(dm, DistanceMatrix) else np.asarray(dm, dtype=float)
    labels = np.asarray(assignments)
    if labels.shape != (len(D),):
        raise ShapeError(f"{labels.size} assignments for {len(D)} stations")
    clusters = np.unique(labels)
    if clusters.size < 2:
        raise UndefinedSilhouetteError("silhouette needs at least 2 clusters")
    n = len(D)
    masks = [labels == c for c in clusters]
    sizes = np.array([m.sum() for m in masks])
    # mean distance from every point to every cluster
    sums = np.column_stack([D[:, m].sum(axis=1) for m in masks])
    own = np.searchsorted(clusters, labels)
    scores = np.zeros(n)
    for i in range(n):
        size = sizes[own[i]]
        if size == 1:
            continue
        a = sums[i, own[i]] / (size - 1)
        others = np.delete(sums[i] / sizes, own[i])
        b = others.min()
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0 else (b - a) / denom
    return SilhouetteReport(scores, float(scores.mean()), int(clusters.size))


def select_k(ds: Dataset, k_range: Sequence[int] | None = None, seed: int = 0,
             metric: str = "cid", algo: str = "kmeans", n_init: int = 10,
             dm: DistanceMatrix | None = None):
    """Pick k by mean silhouette.

    Each k in ``[k_min, k_max]`` is fitted with the same seed and scored on the
    pairwise matrix of ``metric``. Returns ``(k_best, [(k, score), ...])``;
    ties go to the smallest k.
    """
    n = len(ds)
    if k_range is None:
        k_range = (2, min(10, n - 1))
    k_min, k_max = int(k_range[0]), int(k_range[1])
    if not 2 <= k_min <= k_max <= n - 1:
        raise ParameterError(f"need 2 <= k_min <= k_max <= n-1 = {n - 1}, got [{k_min}, {k_max}]")
    if algo not in ("kmeans", "kmedoids"):
        raise ParameterError(f"unknown algo {algo!r}")
    if dm is None:
        dm = pairwise_matrix(ds, metric)
    table = []
    for k in range(k_min, k_max + 1):
        if algo == "kmeans":
            model = kmeans_fit(ds, k, seed=seed, metric=metric, n_init=n_init)
        else:
            model = kmedoids_fit(dm, k, seed=seed, n_init=n_init)
        table.append((k, silhouette(dm, model.assignments).mean))
    best_k, best_score = table[0]
    for k, score in table[1:]:
        if score > best_score:
            best_k, best_score = k, score
    return best_k, table


def adjusted_rand_index(a, b) -> float:
    """Adjusted Rand index between two labelings (pair-counting form)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"labelings must be equal-length 1-D, got {a.shape} and {b.shape}")
    n = a.size
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    index = sum(comb(int(v), 2) for v in table.ravel())
    rows = sum(comb(int(v), 2) for v in table.sum(axis=1))
    cols = sum(comb(int(v), 2) for v in table.sum(axis=0))
    total = comb(n, 2)
    if total == 0:
        return 1.0
    expected = rows * cols / total
    max_index = (rows + cols) / 2
    if max_index == expected:
        # both partitions trivial in the same way
        return 1.0
    return float((index - expected) / (max_index - expected))
