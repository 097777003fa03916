"""Command-line surface: one subcommand per pipeline stage.

Every subcommand is a thin adapter around the library modules; the CLI
adds only argument plumbing and atomic file writes. Exit codes: 0 on
success, 1 on a data or domain error (message names the failing stage),
2 on a usage error.

A JSON config file given via --config supplies defaults for any flag
(keys are the flag names with dashes replaced by underscores); explicit
command-line flags win. PLACESCOPE_THREADS is the fallback for
--threads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .boundary import contour, split_corpus, to_geojson
from .cluster import NOISE, cluster_csv, dbscan, dmdbscan, ward_cluster
from .errors import PlacescopeError
from .ingest import (
    BoundingBox,
    PlaceQuery,
    filter_noise,
    post_to_json,
    query_keyword,
    read_posts,
    slice_by_season,
)
from .kde import (
    ChangeMode,
    atomic_write_text,
    kde,
    make_grid,
    normalize_diff,
    project,
    project_posts,
    read_ascii_grid,
    read_binary_grid,
    resolve_radius,
    seasonal_change,
    write_ascii_grid,
    write_binary_grid,
)
from .ontology import (
    REGION_PRESETS,
    OntologyConfig,
    RegionProfile,
    build_place_ontology,
    classify_feature,
    ontology_to_json,
)
from .semantic import (
    Scope,
    TokenMode,
    load_stopwords,
    term_table,
    term_table_csv,
    term_table_json,
)
from .synth import TruthKind, TruthSpec, gen_blob, gen_polyline, gen_uniform
from .synth import truth_region_geojson

__all__ = ["main", "build_parser"]

_SEASON_NAMES = ("spring", "summer", "fall", "winter")
_MODE_BY_NAME = {
    "absolute": ChangeMode.ABSOLUTE,
    "normalized": ChangeMode.NORMALIZED,
}
_TOKEN_MODE_BY_NAME = {
    "latin": TokenMode.LATIN,
    "cjk-bigram": TokenMode.CJK_BIGRAM,
}


class _UsageError(Exception):
    """Bad flag combination discovered after parsing; exits 2."""


# ---------------------------------------------------------------------------
# Shared argument groups
# ---------------------------------------------------------------------------

def _add_area_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--region", choices=sorted(REGION_PRESETS),
                   help="built-in study area (bbox + polyline threshold)")
    p.add_argument("--bbox", nargs=4, type=float, default=None,
                   metavar=("MIN_LON", "MIN_LAT", "MAX_LON", "MAX_LAT"),
                   help="explicit study-area bounding box")


def _bbox_from_args(args) -> BoundingBox:
    if args.region and args.bbox:
        raise _UsageError("--region and --bbox are mutually exclusive")
    if args.region:
        return REGION_PRESETS[args.region].bbox
    if args.bbox:
        return BoundingBox(*args.bbox)
    raise _UsageError("an area is required: --region or --bbox")


def _region_from_args(args) -> RegionProfile:
    """A full profile for commands that also need the polyline cutoff."""
    if args.region and args.bbox:
        raise _UsageError("--region and --bbox are mutually exclusive")
    if args.region:
        profile = REGION_PRESETS[args.region]
        if getattr(args, "threshold", None) is not None:
            profile = RegionProfile(profile.name, profile.bbox,
                                    args.threshold, profile.default_cell_size)
        return profile
    if args.bbox:
        if getattr(args, "threshold", None) is None:
            raise _UsageError("--bbox needs --threshold (meters)")
        return RegionProfile("custom", BoundingBox(*args.bbox), args.threshold)
    raise _UsageError("an area is required: --region or --bbox")


def _query_from_args(args) -> PlaceQuery:
    return PlaceQuery(args.name, tuple(args.alias or ()))


def _threads_from_args(args) -> int:
    if args.threads is not None:
        if args.threads < 1:
            raise _UsageError("--threads must be >= 1")
        return args.threads
    raw = os.environ.get("PLACESCOPE_THREADS")
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"PLACESCOPE_THREADS is not an integer: {raw!r}")
    if n < 1:
        raise ValueError(f"PLACESCOPE_THREADS must be >= 1, got {n}")
    return n


def _read_grid(path) -> "object":
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"PSGR":
        return read_binary_grid(path)
    return read_ascii_grid(path)


def _write_grid(raster, path, fmt: str) -> None:
    if fmt == "binary":
        write_binary_grid(raster, path)
    else:
        write_ascii_grid(raster, path)


def _write_posts_atomic(path, posts) -> None:
    atomic_write_text(path, "".join(post_to_json(p) + "\n" for p in posts))


def _planar_setup(args, posts):
    """Project posts about the area center and build the area grid."""
    bbox = _bbox_from_args(args)
    origin = bbox.center()
    xy = project_posts(posts, origin[0], origin[1])
    lo = project(bbox.min_lon, bbox.min_lat, origin[0], origin[1])
    hi = project(bbox.max_lon, bbox.max_lat, origin[0], origin[1])
    grid = make_grid((lo.x, lo.y, hi.x, hi.y), args.cell_size)
    return origin, xy, grid


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    bbox = _bbox_from_args(args)
    posts, malformed = read_posts(args.input, strict=False)
    clean, report = filter_noise(posts, bbox, tuple(args.blocked_source or ()),
                                 malformed)
    _write_posts_atomic(args.output, clean)
    if args.report:
        atomic_write_text(
            args.report, json.dumps(report.to_dict(), indent=2) + "\n"
        )
    print(f"kept {report.final_count} of {report.original_count} posts "
          f"({report.noise_percentage}% noise)")
    return 0


def cmd_kde(args) -> int:
    posts, _ = read_posts(args.input)
    _, xy, grid = _planar_setup(args, posts)
    radius = resolve_radius(xy, args.cell_size, args.radius)
    raster = kde(xy, grid, radius)
    _write_grid(raster, args.output, args.format)
    print(f"{raster.n_cols}x{raster.n_rows} cells at {args.cell_size} m, "
          f"radius {radius:.3f} m")
    return 0


def cmd_normalize(args) -> int:
    keyword = _read_grid(args.keyword)
    background = _read_grid(args.background)
    _write_grid(normalize_diff(keyword, background), args.output, args.format)
    return 0


def cmd_boundary(args) -> int:
    bbox = _bbox_from_args(args)
    raster = _read_grid(args.input)
    bset = contour(raster, args.level)
    atomic_write_text(args.output, to_geojson(bset, bbox.center()) + "\n")
    print(f"{len(bset.polygons)} ring(s) at level {args.level}")
    return 0


def cmd_classify(args) -> int:
    if args.threshold is not None and not args.region:
        # Classification needs only the cutoff; the bbox is irrelevant.
        region = RegionProfile("custom", BoundingBox(-1.0, -1.0, 1.0, 1.0),
                               args.threshold)
    else:
        region = _region_from_args(args)
    print(classify_feature(args.radius, region).value)
    return 0


def cmd_cluster(args) -> int:
    posts, _ = read_posts(args.input)
    bbox = _bbox_from_args(args)
    origin = bbox.center()
    xy = project_posts(posts, origin[0], origin[1])
    if args.method == "dbscan":
        eps = resolve_radius(xy, 100.0, args.eps)
        result = dbscan(xy, eps, args.min_pts)
    elif args.method == "dmdbscan":
        result = dmdbscan(xy, args.min_pts)
    else:
        if args.k is None:
            raise _UsageError("ward needs --k")
        result = ward_cluster(xy, args.k)
    atomic_write_text(args.output, cluster_csv(result, xy))
    noise = int((result.labels == NOISE).sum())
    print(f"{result.k} cluster(s), {noise} noise point(s)")
    return 0


def cmd_temporal(args) -> int:
    posts, _ = read_posts(args.input)
    query = _query_from_args(args)
    corpus = query_keyword(posts, query)
    origin, corpus_xy, grid = _planar_setup(args, corpus)
    radius = resolve_radius(corpus_xy, args.cell_size, args.radius)
    kw_by_season = {
        s: project_posts(ps, origin[0], origin[1])
        for s, ps in slice_by_season(corpus).items() if ps
    }
    all_by_season = {
        s: project_posts(ps, origin[0], origin[1])
        for s, ps in slice_by_season(posts).items() if ps
    }
    change = seasonal_change(
        kw_by_season, all_by_season,
        _season_by_name(args.from_season), _season_by_name(args.to_season),
        _MODE_BY_NAME[args.mode], grid, radius,
    )
    _write_grid(change.raster, args.output, args.format)
    return 0


def _season_by_name(name: str):
    from .ingest import Season

    return {
        "spring": Season.SPRING,
        "summer": Season.SUMMER,
        "fall": Season.FALL,
        "winter": Season.WINTER,
    }[name]


def cmd_semantic(args) -> int:
    posts, _ = read_posts(args.input)
    query = _query_from_args(args)
    stop = load_stopwords(args.stopwords) if args.stopwords else set()
    table = term_table(posts, query, stop, args.top_k, Scope.FULL,
                       _TOKEN_MODE_BY_NAME[args.token_mode])
    if args.format == "json":
        text = term_table_json(table) + "\n"
    else:
        text = term_table_csv(table)
    if args.output:
        atomic_write_text(args.output, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_synth(args) -> int:
    if args.uniform:
        if args.spec:
            raise _UsageError("--uniform and --spec are mutually exclusive")
        if args.seed is None:
            raise _UsageError("--uniform needs --seed")
        bbox = _bbox_from_args(args)
        posts = gen_uniform(bbox, args.count, args.seed)
    else:
        if not args.spec:
            raise _UsageError("synth needs --spec or --uniform")
        with open(args.spec, encoding="utf-8") as fh:
            spec = TruthSpec.from_dict(json.load(fh))
        if spec.kind is TruthKind.DISK:
            posts = gen_blob(spec, args.count)
        else:
            posts = gen_polyline(spec, args.count)
        if args.truth:
            atomic_write_text(args.truth, truth_region_geojson(spec) + "\n")
    _write_posts_atomic(args.output, posts)
    print(f"wrote {len(posts)} post(s)")
    return 0


def cmd_ontology(args) -> int:
    region = _region_from_args(args)
    posts, _ = read_posts(args.input)
    query = _query_from_args(args)
    corpus = query_keyword(posts, query)
    stop = frozenset(load_stopwords(args.stopwords)) if args.stopwords \
        else frozenset()
    config = OntologyConfig(
        cell_size=args.cell_size,
        search_radius=args.radius,
        contour_level=args.level,
        min_posts=args.min_posts,
        dbscan_eps=args.eps,
        dbscan_min_pts=args.min_pts,
        concave_k0=args.concave_k,
        top_k=args.top_k,
        stopwords=stop,
        token_mode=_TOKEN_MODE_BY_NAME[args.token_mode],
        seasonal_mode=_MODE_BY_NAME[args.seasonal_mode],
        threads=_threads_from_args(args),
    )
    result = build_place_ontology(query, corpus, posts, region, config)

    out_dir = Path(args.output_dir)
    (out_dir / "rasters").mkdir(parents=True, exist_ok=True)
    refs: dict[str, str] = {}
    for name in sorted(result.rasters):
        rel = f"rasters/{name}.asc"
        write_ascii_grid(result.rasters[name], out_dir / rel)
        refs[name] = rel
    atomic_write_text(out_dir / "ontology.json",
                      ontology_to_json(result, refs))
    print(f"{result.feature_category.value}; {result.post_count} post(s); "
          f"wrote {out_dir / 'ontology.json'}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

#: Flags that must end up non-None after the config merge, per command.
_REQUIRED: dict[str, tuple[str, ...]] = {
    "ingest": ("input", "output"),
    "kde": ("input", "output"),
    "normalize": ("keyword", "background", "output"),
    "boundary": ("input", "output"),
    "classify": ("radius",),
    "cluster": ("input", "output"),
    "temporal": ("input", "output", "name", "from_season", "to_season"),
    "semantic": ("input", "name"),
    "synth": ("output", "count"),
    "ontology": ("input", "name", "output_dir"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="placescope",
        description="Derive place footprints, semantics, and seasonal "
                    "dynamics from geotagged posts.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of flag defaults")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: PLACESCOPE_THREADS or 1)")

    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="COMMAND")

    p = sub.add_parser("ingest", parents=[common],
                       help="parse and noise-filter a raw JSONL corpus")
    p.add_argument("--input", help="raw posts, one JSON object per line")
    p.add_argument("--output", help="cleaned corpus (JSONL)")
    p.add_argument("--report", help="noise report destination (JSON)")
    p.add_argument("--blocked-source", action="append", default=None,
                   metavar="NAME", help="drop posts from this source app")
    _add_area_args(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("kde", parents=[common],
                       help="density surface for a corpus")
    p.add_argument("--input", help="cleaned corpus (JSONL)")
    p.add_argument("--output", help="grid destination")
    p.add_argument("--cell-size", type=float, default=100.0)
    p.add_argument("--radius", type=float, default=None,
                   help="search radius override in meters")
    p.add_argument("--format", choices=("ascii", "binary"), default="ascii")
    _add_area_args(p)
    p.set_defaults(func=cmd_kde)

    p = sub.add_parser("normalize", parents=[common],
                       help="differential surface of two density grids")
    p.add_argument("--keyword", help="keyword density grid")
    p.add_argument("--background", help="all-posts density grid")
    p.add_argument("--output", help="grid destination")
    p.add_argument("--format", choices=("ascii", "binary"), default="ascii")
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("boundary", parents=[common],
                       help="zero-contour rings of a differential grid")
    p.add_argument("--input", help="differential grid")
    p.add_argument("--output", help="GeoJSON destination")
    p.add_argument("--level", type=float, default=0.0)
    _add_area_args(p)
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("classify", parents=[common],
                       help="feature category from the default radius")
    p.add_argument("--radius", type=float, help="default search radius (m)")
    p.add_argument("--threshold", type=float, default=None,
                   help="polyline cutoff in meters")
    _add_area_args(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("cluster", parents=[common],
                       help="label a corpus's points by spatial cluster")
    p.add_argument("--input", help="cleaned corpus (JSONL)")
    p.add_argument("--output", help="labels CSV destination")
    p.add_argument("--method", choices=("dbscan", "dmdbscan", "ward"),
                   default="dbscan")
    p.add_argument("--eps", type=float, default=None,
                   help="dbscan radius (default: data-driven)")
    p.add_argument("--min-pts", type=int, default=4)
    p.add_argument("--k", type=int, default=None, help="ward cluster count")
    _add_area_args(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("temporal", parents=[common],
                       help="season-over-season change surface")
    p.add_argument("--input", help="cleaned corpus (JSONL)")
    p.add_argument("--output", help="grid destination")
    p.add_argument("--name", help="place name to track")
    p.add_argument("--alias", action="append", default=None)
    p.add_argument("--from-season", choices=_SEASON_NAMES)
    p.add_argument("--to-season", choices=_SEASON_NAMES)
    p.add_argument("--mode", choices=sorted(_MODE_BY_NAME),
                   default="normalized")
    p.add_argument("--cell-size", type=float, default=100.0)
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--format", choices=("ascii", "binary"), default="ascii")
    _add_area_args(p)
    p.set_defaults(func=cmd_temporal)

    p = sub.add_parser("semantic", parents=[common],
                       help="PMI term table for a corpus and place name")
    p.add_argument("--input", help="cleaned corpus (JSONL)")
    p.add_argument("--output", default=None,
                   help="destination (default: stdout)")
    p.add_argument("--name", help="place name")
    p.add_argument("--alias", action="append", default=None)
    p.add_argument("--top-k", type=int, default=50)
    p.add_argument("--stopwords", default=None, help="stopword list file")
    p.add_argument("--token-mode", choices=sorted(_TOKEN_MODE_BY_NAME),
                   default="latin")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_semantic)

    p = sub.add_parser("synth", parents=[common],
                       help="synthetic corpora with known ground truth")
    p.add_argument("--spec", default=None, help="place spec (JSON)")
    p.add_argument("--uniform", action="store_true",
                   help="uniform background posts over --bbox/--region")
    p.add_argument("--seed", type=int, default=None,
                   help="RNG seed for --uniform")
    p.add_argument("--count", type=int, help="number of posts")
    p.add_argument("--output", help="posts destination (JSONL)")
    p.add_argument("--truth", default=None,
                   help="ground-truth region destination (GeoJSON)")
    _add_area_args(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ontology", parents=[common],
                       help="full pipeline: footprint, terms, seasons")
    p.add_argument("--input", help="cleaned corpus (JSONL)")
    p.add_argument("--name", help="place name")
    p.add_argument("--alias", action="append", default=None)
    p.add_argument("--output-dir", help="artifact directory")
    p.add_argument("--threshold", type=float, default=None,
                   help="polyline cutoff override (m)")
    p.add_argument("--cell-size", type=float, default=None)
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--level", type=float, default=0.0)
    p.add_argument("--min-posts", type=int, default=10)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--min-pts", type=int, default=4)
    p.add_argument("--concave-k", type=int, default=3)
    p.add_argument("--top-k", type=int, default=50)
    p.add_argument("--stopwords", default=None)
    p.add_argument("--token-mode", choices=sorted(_TOKEN_MODE_BY_NAME),
                   default="latin")
    p.add_argument("--seasonal-mode", choices=sorted(_MODE_BY_NAME),
                   default="normalized")
    _add_area_args(p)
    p.set_defaults(func=cmd_ontology)

    # Subparsers resolve defaults in their own namespace, so config-file
    # defaults must be applied to each of them, not just to the parent.
    parser.subcommands = dict(sub.choices)
    return parser


def _load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise ValueError("config must be a JSON object")
    mapped = {key.replace("-", "_"): value for key, value in obj.items()}
    reserved = {"func", "command"} & set(mapped)
    if reserved:
        raise ValueError(f"reserved config keys: {sorted(reserved)}")
    return mapped


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)

    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)

    parser = build_parser()
    if known.config:
        try:
            defaults = _load_config(known.config)
        except (OSError, ValueError) as exc:
            print(f"error: config: {exc}", file=sys.stderr)
            return 1
        parser.set_defaults(**defaults)
        for sub in parser.subcommands.values():
            sub.set_defaults(**defaults)

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 0

    missing = [name for name in _REQUIRED.get(args.command, ())
               if getattr(args, name, None) is None]
    if missing:
        flags = ", ".join("--" + name.replace("_", "-") for name in missing)
        print(f"usage error: {args.command}: missing {flags}",
              file=sys.stderr)
        return 2

    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {args.command}: {exc}", file=sys.stderr)
        return 2
    except PlacescopeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
