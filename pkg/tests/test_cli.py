import csv
import json

import pytest

from station_pulse.cli import main, parse_snapshots


@pytest.fixture(scope="module")
def synth_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    rc = main(["synth", "--kinds", "reliable:4,connector:4,cryo:4", "--hours", "240", "--seed", "3",
               "--out", str(d / "syn.json"), "--labels", str(d / "labels.csv"),
               "--readings-out", str(d / "r.csv"), "--meta-out", str(d / "m.csv")])
    assert rc == 0
    return d


def test_stagewise_pipeline(synth_files):
    d = synth_files
    assert main(["ingest", "--readings", str(d / "r.csv"), "--meta", str(d / "m.csv"),
                 "--exclude", "connector-003", "--out", str(d / "raw.json")]) == 0
    raw = json.loads((d / "raw.json").read_text())
    assert len(raw["stations"]) == 11
    assert main(["preprocess", "--in", str(d / "raw.json"), "--normalize", "min_max",
                 "--out", str(d / "pre.json")]) == 0
    assert main(["distance", "--in", str(d / "pre.json"), "--metric", "cid", "--out", str(d / "dm.csv")]) == 0
    with (d / "dm.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 12 and rows[0][0] == "station_id"
    assert main(["cluster", "--in", str(d / "pre.json"), "--k", "auto", "--k-range", "2:5",
                 "--algo", "kmeans", "--seed", "42", "--out", str(d / "clusters.json")]) == 0
    clusters = json.loads((d / "clusters.json").read_text())
    best = max(clusters["score_table"], key=lambda r: r["mean_silhouette"])
    assert clusters["k"] == best["k"]
    assert {"k", "seed", "metric", "algo", "assignments", "silhouette", "score_table", "centroids"} <= set(clusters)
    assert main(["spatial", "--in", str(d / "pre.json"), "--scheme", "knn:3", "--snapshots", "every:48",
                 "--perms", "99", "--seed", "1", "--out", str(d / "moran.json")]) == 0
    assert main(["spatial", "--in", str(d / "pre.json"), "--snapshots", "even:3", "--window", "24",
                 "--perms", "19", "--out", str(d / "moran_w.json")]) == 0
    windowed = json.loads((d / "moran_w.json").read_text())
    assert windowed["window"] == 24 and [r["timestamp"] for r in windowed["results"]] == [0, 108, 216]
    moran = json.loads((d / "moran.json").read_text())
    assert [r["timestamp"] for r in moran["results"]] == [0, 48, 96, 144, 192]
    assert main(["report", "--dataset", str(d / "pre.json"), "--clusters", str(d / "clusters.json"),
                 "--moran", str(d / "moran.json"), "--annotations", str(d / "labels.csv"), "--out-json", str(d / "report.json"),
                 "--out-plot", str(d / "plot.csv")]) == 1  # labels include the excluded station
    ann = d / "ann.csv"
    ann.write_text("".join(l for l in (d / "labels.csv").open() if not l.startswith("connector-003")))
    assert main(["report", "--dataset", str(d / "pre.json"), "--clusters", str(d / "clusters.json"),
                 "--moran", str(d / "moran.json"), "--annotations", str(ann),
                 "--out-json", str(d / "report.json"), "--out-plot", str(d / "plot.csv")]) == 0
    report = json.loads((d / "report.json").read_text())
    assert len(report["annotations"]) == clusters["k"]
    assert set(report["annotations"].values()) <= {"connector", "cryo_small_tank", "reliable", "ambiguous"}
    assert len(report["moran"]) == 5


def test_kmedoids_fixed_k(synth_files, tmp_path):
    d = synth_files
    assert main(["preprocess", "--in", str(d / "syn.json"), "--out", str(tmp_path / "p.json")]) == 0
    assert main(["cluster", "--in", str(tmp_path / "p.json"), "--k", "3", "--algo", "kmedoids",
                 "--out", str(tmp_path / "c.json")]) == 0
    doc = json.loads((tmp_path / "c.json").read_text())
    assert doc["algo"] == "kmedoids" and len(doc["medoids"]) == 3 and doc["score_table"] == []


def test_errors_exit_nonzero(tmp_path, capsys):
    (tmp_path / "r.csv").write_text("")
    (tmp_path / "m.csv").write_text("station_id,name,lat,lon,storage_kg\nA,a,1,1,\n")
    assert main(["ingest", "--readings", str(tmp_path / "r.csv"), "--meta", str(tmp_path / "m.csv"),
                 "--out", str(tmp_path / "o.json")]) == 1
    assert "error" in capsys.readouterr().err


def test_parse_snapshots():
    assert parse_snapshots("1,5,9", 20) == [1, 5, 9]
    assert parse_snapshots("every:7", 20) == [0, 7, 14]
    assert parse_snapshots("even:3", 21) == [0, 10, 20]
    assert parse_snapshots("mean", 20) == [-1]
    assert parse_snapshots("even:3", 24, window=4) == [0, 10, 20]
    assert parse_snapshots("every:10", 24, window=4) == [0, 10, 20]
