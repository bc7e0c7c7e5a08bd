"""``station-pulse`` command line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .cluster import ClusterModel, kmeans_fit, kmedoids_fit, select_k, silhouette
from .distance import pairwise_matrix, write_matrix_csv
from .exceptions import ParameterError, StationPulseError
from .ingest import exclude_stations, load_dataset, load_readings, save_dataset, write_readings
from .preprocess import NORMALIZATION_METHODS, preprocess_all
from .report import annotate_clusters, emit_report
from .spatial import SUMMARY_TIMESTAMP, MoranResult, build_weights, evenly_spaced, moran_scan
from .synth import ArchetypeSpec, benchmark_set, default_grid, parse_kinds

log = logging.getLogger("station_pulse")


def _dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n",
                          encoding="utf-8")


def _read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _split_ids(text):
    return [s.strip() for s in (text or "").split(",") if s.strip()]


def parse_k_range(text):
    lo, sep, hi = text.partition(":")
    try:
        return (int(lo), int(hi)) if sep else (int(lo), int(lo))
    except ValueError:
        raise ParameterError(f"bad k range {text!r}; expected e.g. 2:10") from None


def parse_snapshots(text, n_steps, window=1):
    """``"0,24,48"``, ``"every:168"``, ``"even:10"`` or ``"mean"``.

    Generated starts leave room for a ``window``-hour interval.
    """
    if text == "mean":
        return [SUMMARY_TIMESTAMP]
    room = n_steps - window + 1
    if room < 1:
        raise ParameterError(f"window {window} longer than the grid ({n_steps} h)")
    if text.startswith("every:"):
        stride = int(text.split(":", 1)[1])
        if stride < 1:
            raise ParameterError("stride must be >= 1")
        return list(range(0, room, stride))
    if text.startswith("even:"):
        return evenly_spaced(room, int(text.split(":", 1)[1]))
    try:
        return [int(v) for v in _split_ids(text)]
    except ValueError:
        raise ParameterError(f"bad snapshot list {text!r}") from None


def _fit_clusters(ds, k, k_range, algo, metric, seed):
    """Returns ``(model, silhouette_report or None, score_table)``."""
    dm = pairwise_matrix(ds, metric)
    table = []
    if k == "auto":
        k_range = k_range or (2, min(10, len(ds) - 1))
        k, table = select_k(ds, k_range, seed=seed, metric=metric, algo=algo, dm=dm)
    else:
        k = int(k)
    if algo == "kmeans":
        model = kmeans_fit(ds, k, seed=seed, metric=metric)
    else:
        model = kmedoids_fit(dm, k, seed=seed, ds=ds)
    sil = silhouette(dm, model.assignments) if model.k >= 2 else None
    return model, sil, table


def _clusters_doc(model, sil, table):
    doc = model.to_dict()
    doc["silhouette"] = None if sil is None else {
        "mean": sil.mean,
        "per_station": {s: float(v) for s, v in zip(model.station_ids, sil.per_station)},
    }
    doc["score_table"] = [{"k": k, "mean_silhouette": s} for k, s in table]
    return doc


def _silhouette_from_doc(doc, model):
    from .cluster import SilhouetteReport

    sil = doc.get("silhouette")
    if not sil:
        return None
    per = np.array([sil["per_station"][s] for s in model.station_ids])
    return SilhouetteReport(per, float(sil["mean"]), model.k)


def _moran_doc(results, scheme, seed, perms, window):
    return {
        "scheme": scheme,
        "window": window,
        "seed": seed,
        "n_permutations": perms,
        "results": [r.to_dict() for r in results],
    }


def cmd_ingest(args):
    ds = load_readings(args.readings, args.meta)
    if args.exclude:
        ds = exclude_stations(ds, _split_ids(args.exclude))
    save_dataset(ds, args.out)
    log.info("wrote %d stations x %d hours to %s", len(ds), ds.grid.n_steps, args.out)


def cmd_preprocess(args):
    ds = preprocess_all(load_dataset(args.input), args.normalize)
    save_dataset(ds, args.out)


def cmd_distance(args):
    write_matrix_csv(pairwise_matrix(load_dataset(args.input), args.metric), args.out)


def cmd_cluster(args):
    ds = load_dataset(args.input)
    k_range = parse_k_range(args.k_range) if args.k_range else None
    model, sil, table = _fit_clusters(ds, args.k, k_range, args.algo, args.metric, args.seed)
    _dump_json(_clusters_doc(model, sil, table), args.out)
    log.info("k=%d, mean silhouette %s", model.k, None if sil is None else round(sil.mean, 4))


def cmd_spatial(args):
    ds = load_dataset(args.input)
    w = build_weights(ds.metas, args.scheme)
    stamps = parse_snapshots(args.snapshots, ds.grid.n_steps, args.window)
    results = moran_scan(ds, w, stamps, args.perms, args.seed, args.window)
    _dump_json(_moran_doc(results, args.scheme, args.seed, args.perms, args.window), args.out)


def cmd_synth(args):
    grid = default_grid(args.hours)
    specs = [ArchetypeSpec(kind, n, args.noise, args.seed, grid) for kind, n in parse_kinds(args.kinds)]
    ds, labels = benchmark_set(specs)
    save_dataset(ds, args.out)
    if args.labels:
        with Path(args.labels).open("w", encoding="utf-8") as fh:
            fh.write("station_id,label\n")
            for sid, lab in zip(ds.station_ids, labels):
                fh.write(f"{sid},{lab}\n")
    if args.readings_out or args.meta_out:
        if not (args.readings_out and args.meta_out):
            raise ParameterError("--readings-out and --meta-out go together")
        write_readings(ds, args.readings_out, args.meta_out)


def cmd_report(args):
    ds = load_dataset(args.dataset)
    doc = _read_json(args.clusters)
    model = ClusterModel.from_dict(doc)
    moran = []
    if args.moran:
        moran = [MoranResult.from_dict(r) for r in _read_json(args.moran)["results"]]
    names = annotate_clusters(model, args.annotations) if args.annotations else None
    emit_report(
        ds, model, args.out_json, args.out_plot,
        silhouette=_silhouette_from_doc(doc, model),
        score_table=[(r["k"], r["mean_silhouette"]) for r in doc.get("score_table", [])],
        moran=moran,
        annotations=names,
        seeds={"cluster": model.seed},
    )


def cmd_run(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    raw = load_readings(args.readings, args.meta)
    if args.exclude:
        raw = exclude_stations(raw, _split_ids(args.exclude))
    ds = preprocess_all(raw, args.normalize)
    save_dataset(ds, out / "dataset.json")

    k_range = parse_k_range(args.k_range) if args.k_range else None
    model, sil, table = _fit_clusters(ds, args.k, k_range, args.algo, args.metric, args.seed)
    _dump_json(_clusters_doc(model, sil, table), out / "clusters.json")

    moran = []
    if len(ds) >= 3:
        w = build_weights(ds.metas, args.scheme)
        stamps = parse_snapshots(args.snapshots, ds.grid.n_steps, args.window)
        moran = moran_scan(ds, w, stamps, args.perms, args.seed, args.window)
        _dump_json(_moran_doc(moran, args.scheme, args.seed, args.perms, args.window),
                   out / "moran.json")

    names = annotate_clusters(model, args.annotations) if args.annotations else None
    emit_report(
        ds, model, out / "report.json", out / "plotdata.csv",
        silhouette=sil, score_table=table, moran=moran, annotations=names,
        seeds={"cluster": args.seed, "moran": args.seed},
    )
    significant = sum(r.p_value <= 0.05 for r in moran)
    print(f"k={model.k} stations={len(ds)} significant_moran={significant}/{len(moran)} -> {out}")


def _add_cluster_opts(p):
    p.add_argument("--metric", choices=["cid", "euclidean"], default="cid")
    p.add_argument("--k", default="auto", help="'auto' or an integer")
    p.add_argument("--k-range", default=None, help="k_min:k_max for --k auto (default 2:min(10,n-1))")
    p.add_argument("--algo", choices=["kmeans", "kmedoids"], default="kmeans")
    p.add_argument("--seed", type=int, default=42)


def _add_spatial_opts(p, seed=True):
    p.add_argument("--scheme", default="inverse_distance", help="inverse_distance or knn:<k>")
    p.add_argument("--snapshots", default="even:10",
                   help="i,j,k | every:<stride> | even:<count> | mean")
    p.add_argument("--window", type=int, default=1,
                   help="average each station over this many hours from each snapshot")
    p.add_argument("--perms", type=int, default=999)
    if seed:
        p.add_argument("--seed", type=int, default=42)


def build_parser():
    parser = argparse.ArgumentParser(prog="station-pulse", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load CSV readings onto an hourly grid")
    p.add_argument("--readings", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--exclude", default="")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("preprocess", help="impute gaps and normalize")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--normalize", choices=NORMALIZATION_METHODS, default="min_max")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("distance", help="pairwise distance matrix as CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--metric", choices=["cid", "euclidean"], default="cid")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("cluster", help="cluster a preprocessed dataset")
    p.add_argument("--in", dest="input", required=True)
    _add_cluster_opts(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("spatial", help="Moran's I permutation scan")
    p.add_argument("--in", dest="input", required=True)
    _add_spatial_opts(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spatial)

    p = sub.add_parser("synth", help="generate a labelled synthetic dataset")
    p.add_argument("--kinds", default="reliable:8,overstressed:8,connector:8,cryo:8")
    p.add_argument("--hours", type=int, default=2208)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--readings-out", default=None, help="also write readings CSV")
    p.add_argument("--meta-out", default=None, help="also write metadata CSV")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="assemble report.json and plotdata.csv")
    p.add_argument("--dataset", required=True)
    p.add_argument("--clusters", required=True)
    p.add_argument("--moran", default=None)
    p.add_argument("--annotations", default=None)
    p.add_argument("--out-json", default="report.json")
    p.add_argument("--out-plot", default="plotdata.csv")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="full pipeline from CSVs to report")
    p.add_argument("--readings", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--exclude", default="")
    p.add_argument("--normalize", choices=NORMALIZATION_METHODS, default="min_max")
    _add_cluster_opts(p)
    _add_spatial_opts(p, seed=False)
    p.add_argument("--annotations", default=None)
    p.add_argument("--out-dir", default="station_pulse_out")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        try:
            args.func(args)
        except (StationPulseError, OSError) as exc:
            print(f"station-pulse: error: {exc}", file=sys.stderr)
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
