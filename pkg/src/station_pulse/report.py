"""Run report assembly: ``report.json`` plus a long-format ``plotdata.csv``."""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .cluster import ClusterModel, SilhouetteReport
from .exceptions import ConsistencyError, ParseError, ReferentialError
from .ingest import Dataset, format_timestamp
from .spatial import MoranResult

UNLABELED = "unlabeled"
AMBIGUOUS = "ambiguous"


def load_annotations(path) -> dict[str, str]:
    """Read a ``station_id,label`` CSV."""
    out = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"station_id", "label"} <= set(reader.fieldnames):
            raise ParseError("annotations need columns station_id,label", line=1)
        for row in reader:
            sid = (row["station_id"] or "").strip()
            label = (row["label"] or "").strip()
            if sid and label:
                out[sid] = label
    return out


def annotate_clusters(model: ClusterModel, annotations) -> dict[int, str]:
    """Name each cluster by the majority label of its annotated members.

    ``annotations`` is a CSV path or a ``{station_id: label}`` mapping. Ties
    give ``"ambiguous"``, clusters without annotated members ``"unlabeled"``.
    """
    if not isinstance(annotations, dict):
        annotations = load_annotations(annotations)
    known = set(model.station_ids)
    unknown = sorted(set(annotations) - known)
    if unknown:
        raise ReferentialError(f"annotations reference unknown stations {unknown}")
    names = {}
    for c in range(model.k):
        votes = Counter(annotations[s] for s in model.members(c) if s in annotations)
        if not votes:
            names[c] = UNLABELED
            continue
        ranked = votes.most_common()
        if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
            names[c] = AMBIGUOUS
        else:
            names[c] = ranked[0][0]
    return names


@dataclass
class RunReport:
    dataset: dict
    normalization: str | None
    metric: str
    cluster: dict
    silhouette: dict | None = None
    score_table: list = field(default_factory=list)
    moran: list = field(default_factory=list)
    annotations: dict | None = None
    seeds: dict = field(default_factory=dict)
    version: str = __version__

    def to_dict(self) -> dict:
        return {
            "tool_version": self.version,
            "dataset": self.dataset,
            "normalization": self.normalization,
            "metric": self.metric,
            "cluster": self.cluster,
            "silhouette": self.silhouette,
            "score_table": self.score_table,
            "moran": self.moran,
            "annotations": self.annotations,
            "seeds": self.seeds,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _check_consistent(ds: Dataset, model: ClusterModel):
    if list(model.station_ids) != ds.station_ids:
        missing = sorted(set(ds.station_ids) - set(model.station_ids))
        extra = sorted(set(model.station_ids) - set(ds.station_ids))
        if missing or extra:
            raise ConsistencyError(
                f"cluster model and dataset disagree: missing {missing}, extra {extra}"
            )
        raise ConsistencyError("cluster model station order differs from the dataset")


def build_report(ds: Dataset, model: ClusterModel, silhouette: SilhouetteReport | None = None,
                 score_table: Sequence | None = None, moran: Sequence[MoranResult] | None = None,
                 annotations: dict | None = None, seeds: dict | None = None) -> RunReport:
    _check_consistent(ds, model)
    if annotations is not None:
        bad = sorted(set(int(c) for c in annotations) - set(range(model.k)))
        if bad:
            raise ConsistencyError(f"annotations name clusters that do not exist: {bad}")
    observed = ds.observed
    dataset = {
        "n_stations": len(ds),
        "grid": {
            "start": format_timestamp(ds.grid.start),
            "end": format_timestamp(ds.grid.end),
            "n_steps": ds.grid.n_steps,
        },
        "imputed_fraction": {
            sid: float(1.0 - obs.mean()) for sid, obs in zip(ds.station_ids, observed)
        },
    }
    cluster = {
        "algo": model.algo,
        "k": model.k,
        "assignments": {s: int(c) for s, c in zip(model.station_ids, model.assignments)},
        "sizes": [int(v) for v in np.bincount(model.assignments, minlength=model.k)],
        "inertia": float(model.inertia),
        "n_iterations": int(model.n_iterations),
    }
    sil = None
    if silhouette is not None:
        sil = {
            "mean": float(silhouette.mean),
            "per_station": {s: float(v) for s, v in zip(model.station_ids, silhouette.per_station)},
        }
    return RunReport(
        dataset=dataset,
        normalization=ds.normalization,
        metric=model.metric_tag,
        cluster=cluster,
        silhouette=sil,
        score_table=[{"k": int(k), "mean_silhouette": float(s)} for k, s in (score_table or [])],
        moran=[r.to_dict() for r in (moran or [])],
        annotations=None if annotations is None else {str(c): v for c, v in annotations.items()},
        seeds=dict(seeds or {"cluster": model.seed}),
    )


def write_plotdata(ds: Dataset, model: ClusterModel, path) -> None:
    """Long-format ``station_id,cluster,hour_index,normalized_value`` rows."""
    _check_consistent(ds, model)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["station_id", "cluster", "hour_index", "normalized_value"])
        for s, c in zip(ds.stations, model.assignments):
            for t, v in enumerate(s.values.tolist()):
                w.writerow([s.station_id, int(c), t, repr(v)])


def emit_report(ds: Dataset, model: ClusterModel, out_json, out_plot=None, **parts) -> RunReport:
    """Write ``report.json`` (and ``plotdata.csv`` when ``out_plot`` is given).

    ``parts`` are forwarded to :func:`build_report`.
    """
    report = build_report(ds, model, **parts)
    Path(out_json).write_text(report.to_json(), encoding="utf-8")
    if out_plot is not None:
        write_plotdata(ds, model, out_plot)
    return report
