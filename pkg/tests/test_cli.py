"""Tests for the command-line surface: exit codes, plumbing, artifacts.

The compute paths are covered by the module tests; what matters here is
that every subcommand is a thin adapter (CLI output == direct module
output, byte for byte), that usage mistakes exit 2 and data problems
exit 1, and that failed runs never leave partial artifacts.
"""

import json
import re

import numpy as np
import pytest

from placescope.cli import main
from placescope.cluster import cluster_csv, dbscan, ward_cluster
from placescope.ingest import (
    BoundingBox,
    PlaceQuery,
    post_to_json,
    query_keyword,
    read_posts,
)
from placescope.kde import (
    kde,
    make_grid,
    normalize_diff,
    project,
    project_posts,
    read_ascii_grid,
    read_binary_grid,
    write_ascii_grid,
    write_binary_grid,
)
from placescope.ontology import (
    OntologyConfig,
    RegionProfile,
    build_place_ontology,
    ontology_to_json,
)
from placescope.semantic import Scope, TokenMode, term_table, term_table_csv, term_table_json
from placescope.synth import TruthKind, TruthSpec, gen_blob, gen_uniform, truth_region_geojson

BASIN = BoundingBox(-117.11, 32.69, -117.09, 32.71)
BBOX_ARGS = ["--bbox", "-117.11", "32.69", "-117.09", "32.71"]


@pytest.fixture(scope="module")
def corpus_file(tmp_path_factory):
    """JSONL corpus: keyword blob + denser non-keyword blob + background."""
    origin = BASIN.center()
    campus = TruthSpec(
        kind=TruthKind.DISK, seed=5, sigma=150.0, place_name="campus",
        center=(-400.0, 0.0), origin_lon=origin[0], origin_lat=origin[1],
    )
    anchor = TruthSpec(
        kind=TruthKind.DISK, seed=7, sigma=150.0, place_name="stadium",
        center=(400.0, 0.0), origin_lon=origin[0], origin_lat=origin[1],
        vocab=(("stands", 0.3), ("parking", 0.2)),
    )
    posts = gen_blob(campus, 60) + gen_blob(anchor, 90) + gen_uniform(BASIN, 240, 6)
    path = tmp_path_factory.mktemp("cli") / "corpus.jsonl"
    path.write_text("".join(post_to_json(p) + "\n" for p in posts), encoding="utf-8")
    return path


def _planar_grid(posts, cell_size):
    """The projection/grid setup every planar subcommand performs."""
    origin = BASIN.center()
    xy = project_posts(posts, origin[0], origin[1])
    lo = project(BASIN.min_lon, BASIN.min_lat, origin[0], origin[1])
    hi = project(BASIN.max_lon, BASIN.max_lat, origin[0], origin[1])
    return xy, make_grid((lo.x, lo.y, hi.x, hi.y), cell_size)


# ---------------------------------------------------------------------------
# Exit codes and argument validation
# ---------------------------------------------------------------------------

def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "placescope" in capsys.readouterr().out


def test_no_command_is_usage_error():
    assert main([]) == 2


def test_unknown_command_is_usage_error():
    assert main(["frobnicate"]) == 2


def test_unknown_flag_is_usage_error():
    assert main(["classify", "--radius", "1.0", "--threshold", "10", "--bogus"]) == 2


@pytest.mark.parametrize("command,extra", [
    ("ingest", BBOX_ARGS),
    ("kde", BBOX_ARGS),
    ("normalize", []),
    ("boundary", BBOX_ARGS),
    ("classify", ["--region", "san-diego"]),
    ("cluster", BBOX_ARGS),
    ("temporal", BBOX_ARGS),
    ("semantic", []),
    ("synth", BBOX_ARGS),
    ("ontology", ["--region", "san-diego"]),
])
def test_missing_required_flags_exit_2(command, extra, capsys):
    assert main([command, *extra]) == 2
    err = capsys.readouterr().err
    assert err.startswith(f"usage error: {command}: missing --")


def test_region_and_bbox_are_mutually_exclusive(capsys):
    code = main(["classify", "--radius", "1.0", "--region", "san-diego", *BBOX_ARGS])
    assert code == 2
    assert "mutually exclusive" in capsys.readouterr().err


def test_bbox_area_requires_threshold(capsys):
    assert main(["classify", "--radius", "1.0", *BBOX_ARGS]) == 2
    assert "--threshold" in capsys.readouterr().err


def test_missing_input_file_is_data_error(tmp_path, capsys):
    code = main(["kde", "--input", str(tmp_path / "nope.jsonl"),
                 "--output", str(tmp_path / "g.asc"), *BBOX_ARGS])
    assert code == 1
    assert capsys.readouterr().err.startswith("error: kde:")


def test_empty_corpus_is_data_error_and_leaves_no_output(tmp_path, capsys):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("", encoding="utf-8")
    out = tmp_path / "g.asc"
    assert main(["kde", "--input", str(empty), "--output", str(out), *BBOX_ARGS]) == 1
    assert capsys.readouterr().err.startswith("error:")
    assert not out.exists()


# ---------------------------------------------------------------------------
# classify
# ---------------------------------------------------------------------------

def test_classify_polyline_row(capsys):
    assert main(["classify", "--radius", "33525.77", "--threshold", "10000"]) == 0
    assert capsys.readouterr().out == "Polyline\n"


def test_classify_region_preset(capsys):
    assert main(["classify", "--radius", "692.76", "--region", "beijing"]) == 0
    assert capsys.readouterr().out == "NonPolyline\n"
    assert main(["classify", "--radius", "1424.168", "--region", "beijing"]) == 0
    assert capsys.readouterr().out == "Polyline\n"


def test_classify_threshold_overrides_preset(capsys):
    code = main(["classify", "--radius", "5000", "--region", "san-diego",
                 "--threshold", "2000"])
    assert code == 0
    assert capsys.readouterr().out == "Polyline\n"


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------

def test_ingest_filters_and_reports(tmp_path, capsys):
    inside = gen_uniform(BASIN, 3, 11)
    lines = [post_to_json(p) for p in inside]
    lines.append(json.dumps({
        "id": "out1", "created_at": "2015-07-04T12:00:00Z",
        "lon": -117.3, "lat": 32.70, "text": "far away",
        "source": "web", "platform": "Twitter",
    }))
    lines.append("{this is not json")
    raw = tmp_path / "raw.jsonl"
    raw.write_text("\n".join(lines) + "\n", encoding="utf-8")
    clean = tmp_path / "clean.jsonl"
    report = tmp_path / "report.json"

    code = main(["ingest", "--input", str(raw), "--output", str(clean),
                 "--report", str(report), *BBOX_ARGS])
    assert code == 0
    assert capsys.readouterr().out == "kept 3 of 5 posts (40.0% noise)\n"

    kept, malformed = read_posts(clean)
    assert malformed == 0
    assert [p.id for p in kept] == [p.id for p in inside]

    obj = json.loads(report.read_text(encoding="utf-8"))
    assert obj["original_count"] == 5
    assert obj["final_count"] == 3
    assert obj["noise_percentage"] == 40.0
    assert obj["OutsideBbox"] == 1
    assert obj["Malformed"] == 1


# ---------------------------------------------------------------------------
# kde / normalize / boundary
# ---------------------------------------------------------------------------

def test_kde_cli_matches_direct_call(tmp_path, capsys, corpus_file):
    out = tmp_path / "density.asc"
    code = main(["kde", "--input", str(corpus_file), "--output", str(out),
                 "--cell-size", "100", "--radius", "300", *BBOX_ARGS])
    assert code == 0
    assert "radius 300.000 m" in capsys.readouterr().out

    posts, _ = read_posts(corpus_file)
    xy, grid = _planar_grid(posts, 100.0)
    expected = tmp_path / "expected.asc"
    write_ascii_grid(kde(xy, grid, 300.0), expected)
    assert out.read_bytes() == expected.read_bytes()


def test_kde_binary_format_round_trips(tmp_path, corpus_file):
    out = tmp_path / "density.bin"
    code = main(["kde", "--input", str(corpus_file), "--output", str(out),
                 "--cell-size", "100", "--radius", "300", "--format", "binary",
                 *BBOX_ARGS])
    assert code == 0
    posts, _ = read_posts(corpus_file)
    xy, grid = _planar_grid(posts, 100.0)
    assert np.array_equal(read_binary_grid(out).values, kde(xy, grid, 300.0).values)


def test_normalize_cli_matches_direct_call(tmp_path, corpus_file):
    posts, _ = read_posts(corpus_file)
    keyword = query_keyword(posts, PlaceQuery("campus"))
    kw_xy, grid = _planar_grid(keyword, 100.0)
    all_xy, _ = _planar_grid(posts, 100.0)
    kw_path = tmp_path / "kw.bin"
    bg_path = tmp_path / "bg.bin"
    write_binary_grid(kde(kw_xy, grid, 300.0), kw_path)
    write_binary_grid(kde(all_xy, grid, 300.0), bg_path)

    out = tmp_path / "diff.bin"
    code = main(["normalize", "--keyword", str(kw_path), "--background",
                 str(bg_path), "--output", str(out), "--format", "binary"])
    assert code == 0
    expected = tmp_path / "expected.bin"
    write_binary_grid(
        normalize_diff(read_binary_grid(kw_path), read_binary_grid(bg_path)),
        expected,
    )
    assert out.read_bytes() == expected.read_bytes()


def test_boundary_cli_writes_geojson(tmp_path, capsys, corpus_file):
    grid_path = tmp_path / "density.asc"
    assert main(["kde", "--input", str(corpus_file), "--output", str(grid_path),
                 "--cell-size", "100", "--radius", "300", *BBOX_ARGS]) == 0
    capsys.readouterr()

    rings = tmp_path / "rings.geojson"
    code = main(["boundary", "--input", str(grid_path), "--output", str(rings),
                 "--level", "1e-9", *BBOX_ARGS])
    assert code == 0
    assert re.fullmatch(r"\d+ ring\(s\) at level 1e-09\n", capsys.readouterr().out)
    obj = json.loads(rings.read_text(encoding="utf-8"))
    assert obj["type"] == "Feature"
    assert obj["geometry"]["type"] == "MultiPolygon"
    assert obj["properties"]["ring_count"] >= 1
    assert len(obj["geometry"]["coordinates"]) == obj["properties"]["ring_count"]


# ---------------------------------------------------------------------------
# cluster
# ---------------------------------------------------------------------------

def test_cluster_cli_matches_direct_call(tmp_path, capsys, corpus_file):
    out = tmp_path / "labels.csv"
    code = main(["cluster", "--input", str(corpus_file), "--output", str(out),
                 "--eps", "100", "--min-pts", "4", *BBOX_ARGS])
    assert code == 0
    assert re.fullmatch(r"\d+ cluster\(s\), \d+ noise point\(s\)\n",
                        capsys.readouterr().out)

    posts, _ = read_posts(corpus_file)
    origin = BASIN.center()
    xy = project_posts(posts, origin[0], origin[1])
    assert out.read_text(encoding="utf-8") == cluster_csv(dbscan(xy, 100.0, 4), xy)


def test_cluster_ward_needs_k(tmp_path, capsys, corpus_file):
    code = main(["cluster", "--input", str(corpus_file),
                 "--output", str(tmp_path / "labels.csv"),
                 "--method", "ward", *BBOX_ARGS])
    assert code == 2
    assert "ward needs --k" in capsys.readouterr().err


def test_cluster_ward_matches_direct_call(tmp_path, corpus_file):
    out = tmp_path / "labels.csv"
    code = main(["cluster", "--input", str(corpus_file), "--output", str(out),
                 "--method", "ward", "--k", "3", *BBOX_ARGS])
    assert code == 0
    posts, _ = read_posts(corpus_file)
    origin = BASIN.center()
    xy = project_posts(posts, origin[0], origin[1])
    assert out.read_text(encoding="utf-8") == cluster_csv(ward_cluster(xy, 3), xy)


# ---------------------------------------------------------------------------
# temporal / semantic
# ---------------------------------------------------------------------------

def test_temporal_writes_change_grid(tmp_path, corpus_file):
    out = tmp_path / "change.asc"
    code = main(["temporal", "--input", str(corpus_file), "--output", str(out),
                 "--name", "campus", "--from-season", "spring",
                 "--to-season", "summer", "--mode", "absolute",
                 "--radius", "300", *BBOX_ARGS])
    assert code == 0
    change = read_ascii_grid(out)
    assert np.all(np.isfinite(change.values))
    assert np.any(change.values != 0.0)


def test_semantic_stdout_matches_module(capsys, corpus_file):
    assert main(["semantic", "--input", str(corpus_file), "--name", "campus"]) == 0
    posts, _ = read_posts(corpus_file)
    table = term_table(posts, PlaceQuery("campus"), set(), 50, Scope.FULL,
                       TokenMode.LATIN)
    assert capsys.readouterr().out == term_table_csv(table)


def test_semantic_json_output_file(tmp_path, corpus_file):
    out = tmp_path / "terms.json"
    code = main(["semantic", "--input", str(corpus_file), "--name", "campus",
                 "--format", "json", "--output", str(out)])
    assert code == 0
    posts, _ = read_posts(corpus_file)
    table = term_table(posts, PlaceQuery("campus"), set(), 50, Scope.FULL,
                       TokenMode.LATIN)
    assert out.read_text(encoding="utf-8") == term_table_json(table) + "\n"


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def test_synth_uniform_matches_module(tmp_path, capsys):
    out = tmp_path / "posts.jsonl"
    code = main(["synth", "--uniform", "--seed", "6", "--count", "12",
                 "--output", str(out), *BBOX_ARGS])
    assert code == 0
    assert capsys.readouterr().out == "wrote 12 post(s)\n"
    expected = "".join(post_to_json(p) + "\n" for p in gen_uniform(BASIN, 12, 6))
    assert out.read_text(encoding="utf-8") == expected


def test_synth_spec_matches_module(tmp_path):
    origin = BASIN.center()
    spec_obj = {
        "kind": "Disk", "seed": 5, "sigma": 150.0, "place_name": "campus",
        "center": [-400.0, 0.0],
        "origin_lon": origin[0], "origin_lat": origin[1],
    }
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec_obj), encoding="utf-8")
    out = tmp_path / "posts.jsonl"
    truth = tmp_path / "truth.geojson"

    code = main(["synth", "--spec", str(spec_path), "--count", "30",
                 "--output", str(out), "--truth", str(truth)])
    assert code == 0
    spec = TruthSpec.from_dict(spec_obj)
    expected = "".join(post_to_json(p) + "\n" for p in gen_blob(spec, 30))
    assert out.read_text(encoding="utf-8") == expected
    assert truth.read_text(encoding="utf-8") == truth_region_geojson(spec) + "\n"


def test_synth_spec_and_uniform_conflict(tmp_path, capsys):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text("{}", encoding="utf-8")
    out = str(tmp_path / "posts.jsonl")

    code = main(["synth", "--spec", str(spec_path), "--uniform", "--seed", "1",
                 "--count", "5", "--output", out, *BBOX_ARGS])
    assert code == 2
    assert "mutually exclusive" in capsys.readouterr().err

    assert main(["synth", "--uniform", "--count", "5", "--output", out,
                 *BBOX_ARGS]) == 2
    assert "--seed" in capsys.readouterr().err

    assert main(["synth", "--count", "5", "--output", out, *BBOX_ARGS]) == 2
    assert "--spec or --uniform" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# config file
# ---------------------------------------------------------------------------

def test_config_supplies_defaults_and_flags_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"radius": 33525.77, "threshold": 10000.0}),
                   encoding="utf-8")
    assert main(["classify", "--config", str(cfg)]) == 0
    assert capsys.readouterr().out == "Polyline\n"

    assert main(["classify", "--config", str(cfg), "--radius", "292.54"]) == 0
    assert capsys.readouterr().out == "NonPolyline\n"


def test_config_maps_dashed_keys_to_flags(tmp_path, capsys, corpus_file):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"top-k": 2}), encoding="utf-8")
    code = main(["semantic", "--config", str(cfg), "--input", str(corpus_file),
                 "--name", "campus"])
    assert code == 0
    posts, _ = read_posts(corpus_file)

    def csv_at(k):
        return term_table_csv(term_table(posts, PlaceQuery("campus"), set(), k,
                                         Scope.FULL, TokenMode.LATIN))

    out = capsys.readouterr().out
    assert out == csv_at(2)
    assert out != csv_at(50)    # the default would have produced more rows


def test_config_file_errors_exit_1(tmp_path, capsys):
    code = main(["classify", "--config", str(tmp_path / "missing.json"),
                 "--radius", "1.0", "--threshold", "10"])
    assert code == 1
    assert capsys.readouterr().err.startswith("error: config:")

    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2, 3]", encoding="utf-8")
    code = main(["classify", "--config", str(bad), "--radius", "1.0",
                 "--threshold", "10"])
    assert code == 1
    assert "config" in capsys.readouterr().err

    hijack = tmp_path / "hijack.json"
    hijack.write_text(json.dumps({"func": "x"}), encoding="utf-8")
    code = main(["classify", "--config", str(hijack), "--radius", "1.0",
                 "--threshold", "10"])
    assert code == 1
    assert "reserved" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# ontology
# ---------------------------------------------------------------------------

ONTOLOGY_ARGS = ["--name", "campus", *BBOX_ARGS, "--threshold", "10000"]


def test_ontology_cli_layout_and_summary(tmp_path, capsys, corpus_file):
    out_dir = tmp_path / "out"
    code = main(["ontology", "--input", str(corpus_file),
                 "--output-dir", str(out_dir), "--threads", "1",
                 *ONTOLOGY_ARGS])
    assert code == 0
    assert capsys.readouterr().out == (
        f"NonPolyline; 60 post(s); wrote {out_dir / 'ontology.json'}\n"
    )

    obj = json.loads((out_dir / "ontology.json").read_text(encoding="utf-8"))
    assert obj["schema"] == "placescope/1"
    assert obj["feature_category"] == "NonPolyline"
    for ref in obj["rasters"].values():
        assert ref.startswith("rasters/") and ref.endswith(".asc")
        assert (out_dir / ref).is_file()


def test_ontology_cli_matches_direct_call(tmp_path, corpus_file):
    out_dir = tmp_path / "out"
    assert main(["ontology", "--input", str(corpus_file),
                 "--output-dir", str(out_dir), "--threads", "1",
                 *ONTOLOGY_ARGS]) == 0

    posts, _ = read_posts(corpus_file)
    query = PlaceQuery("campus")
    corpus = query_keyword(posts, query)
    region = RegionProfile("custom", BASIN, 10_000.0)
    result = build_place_ontology(query, corpus, posts, region,
                                  OntologyConfig(threads=1))
    refs = {name: f"rasters/{name}.asc" for name in sorted(result.rasters)}
    expected_json = ontology_to_json(result, refs)
    assert (out_dir / "ontology.json").read_text(encoding="utf-8") == expected_json

    for name, rel in refs.items():
        expected_grid = tmp_path / f"{name}.asc"
        write_ascii_grid(result.rasters[name], expected_grid)
        assert (out_dir / rel).read_bytes() == expected_grid.read_bytes()


def test_ontology_cli_thread_count_invariance(tmp_path, corpus_file):
    serial = tmp_path / "serial"
    threaded = tmp_path / "threaded"
    for out_dir, threads in ((serial, "1"), (threaded, "8")):
        assert main(["ontology", "--input", str(corpus_file),
                     "--output-dir", str(out_dir), "--threads", threads,
                     *ONTOLOGY_ARGS]) == 0
    a = (serial / "ontology.json").read_bytes()
    b = (threaded / "ontology.json").read_bytes()
    assert a == b
    names = sorted(p.name for p in (serial / "rasters").iterdir())
    assert names == sorted(p.name for p in (threaded / "rasters").iterdir())
    for name in names:
        assert (serial / "rasters" / name).read_bytes() == \
            (threaded / "rasters" / name).read_bytes()


def test_threads_env_fallback(tmp_path, monkeypatch, capsys, corpus_file):
    monkeypatch.setenv("PLACESCOPE_THREADS", "2")
    out_dir = tmp_path / "out"
    code = main(["ontology", "--input", str(corpus_file),
                 "--output-dir", str(out_dir), *ONTOLOGY_ARGS])
    assert code == 0
    assert (out_dir / "ontology.json").is_file()


def test_threads_env_malformed_is_data_error(tmp_path, monkeypatch, capsys,
                                             corpus_file):
    out_dir = str(tmp_path / "out")
    args = ["ontology", "--input", str(corpus_file), "--output-dir", out_dir,
            *ONTOLOGY_ARGS]

    monkeypatch.setenv("PLACESCOPE_THREADS", "soon")
    assert main(args) == 1
    assert capsys.readouterr().err.startswith("error: ontology:")

    monkeypatch.setenv("PLACESCOPE_THREADS", "0")
    assert main(args) == 1
    assert "PLACESCOPE_THREADS" in capsys.readouterr().err

    # An explicit flag wins before the environment is consulted.
    monkeypatch.setenv("PLACESCOPE_THREADS", "soon")
    assert main([*args, "--threads", "1"]) == 0


def test_threads_flag_must_be_positive(tmp_path, capsys, corpus_file):
    code = main(["ontology", "--input", str(corpus_file),
                 "--output-dir", str(tmp_path / "out"), "--threads", "0",
                 *ONTOLOGY_ARGS])
    assert code == 2
    assert "--threads must be >= 1" in capsys.readouterr().err
