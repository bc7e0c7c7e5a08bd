"""Behavioural clustering of fuel-station capacity time series."""

__version__ = "0.1.0"

from .cluster import (  # noqa: E402
    ClusterModel,
    KMedoids,
    TimeSeriesKMeans,
    adjusted_rand_index,
    kmeans_fit,
    kmedoids_fit,
    select_k,
    silhouette,
)
from .distance import DistanceMatrix, cid, complexity_estimate, euclidean, pairwise_matrix  # noqa: E402
from .ingest import Dataset, StationMeta, StationSeries, TimeGrid, load_readings  # noqa: E402
from .preprocess import LinearGapImputer, SeriesNormalizer, preprocess_all  # noqa: E402
from .report import annotate_clusters, build_report, emit_report  # noqa: E402
from .spatial import build_weights, moran_scan, morans_i, permutation_test  # noqa: E402
from .synth import ArchetypeSpec, benchmark_set, generate  # noqa: E402
