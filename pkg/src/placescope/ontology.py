"""Feature-type classification and the end-to-end ontology pipeline.

The pipeline: project the corpus, compute the data-driven search
radius, classify the feature type, build keyword and background KDE
surfaces at that radius, take their normalized difference, extract the
zero contour as the boundary, derive hulls from the largest density
cluster (non-polyline places), split the corpus by the boundary, rank
terms inside/outside/overall, and difference consecutive seasons at the
Spring radius. Every stage is deterministic, so replays are
bit-identical regardless of the thread count used for independent
stages.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from . import boundary as boundary_mod
from .cluster import (
    Hull,
    concave_hull,
    convex_hull,
    dbscan,
    largest_cluster,
)
from .errors import PipelineError, PlacescopeError
from .ingest import (
    BoundingBox,
    GeoPost,
    PlaceQuery,
    Season,
    SEASON_CYCLE,
    slice_by_season,
)
from .kde import (
    ChangeMode,
    Raster,
    SeasonalChange,
    default_search_radius,
    kde,
    make_grid,
    normalize_diff,
    project,
    project_posts,
    resolve_radius,
    seasonal_change,
)
from .semantic import Scope, TermTable, TokenMode, term_table

__all__ = [
    "FeatureCategory",
    "RegionProfile",
    "REGION_PRESETS",
    "OntologyConfig",
    "PlaceOntology",
    "classify_feature",
    "build_place_ontology",
    "ontology_to_json",
]


class FeatureCategory(Enum):
    POLYLINE = "Polyline"
    NON_POLYLINE = "NonPolyline"


@dataclass(frozen=True)
class RegionProfile:
    """Study-area configuration: extent and the polyline radius cutoff."""

    name: str
    bbox: BoundingBox
    polyline_threshold: float
    default_cell_size: float = 100.0

    def __post_init__(self):
        if self.polyline_threshold <= 0:
            raise ValueError("polyline_threshold must be positive")
        if self.default_cell_size <= 0:
            raise ValueError("default_cell_size must be positive")


#: Built-in study areas. The thresholds encode how the default search
#: radius separates line features from compact places at each city's
#: posting density: sparse San Diego tweets need 10 km, dense Beijing
#: Weibo only 1 km.
REGION_PRESETS: dict[str, RegionProfile] = {
    "san-diego": RegionProfile(
        name="san-diego",
        bbox=BoundingBox(-117.45, 32.45, -116.90, 33.15),
        polyline_threshold=10_000.0,
    ),
    "beijing": RegionProfile(
        name="beijing",
        bbox=BoundingBox(116.10, 39.70, 116.75, 40.15),
        polyline_threshold=1_000.0,
    ),
}


@dataclass(frozen=True)
class OntologyConfig:
    """Knobs for :func:`build_place_ontology`; defaults mirror the CLI."""

    cell_size: float | None = None       # None -> region default
    search_radius: float | None = None   # None -> data-driven default
    contour_level: float = 0.0
    min_posts: int = 10                  # below: no boundary, no hulls
    dbscan_eps: float | None = None      # None -> the working radius
    dbscan_min_pts: int = 4
    concave_k0: int = 3
    top_k: int = 50
    stopwords: frozenset[str] = frozenset()
    token_mode: TokenMode = TokenMode.LATIN
    seasonal_mode: ChangeMode = ChangeMode.NORMALIZED
    threads: int = 1

    def __post_init__(self):
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.min_posts < 2:
            raise ValueError("min_posts must be >= 2")


@dataclass(frozen=True, eq=False)
class PlaceOntology:
    """The assembled record: footprint, category, semantics, dynamics."""

    query: PlaceQuery
    feature_category: FeatureCategory
    default_radius: float
    boundary: boundary_mod.BoundarySet | None
    hull_convex: Hull | None
    hull_concave: Hull | None
    term_tables: Mapping[Scope, TermTable]
    seasonal_changes: tuple[SeasonalChange, ...]
    post_count: int
    origin: tuple[float, float]
    rasters: Mapping[str, Raster]


def classify_feature(default_radius: float, region: RegionProfile) -> FeatureCategory:
    """Polyline iff the default search radius exceeds the region cutoff."""
    if default_radius <= 0:
        raise ValueError("default_radius must be positive")
    if default_radius > region.polyline_threshold:
        return FeatureCategory.POLYLINE
    return FeatureCategory.NON_POLYLINE


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except (PlacescopeError, ValueError) as exc:
        raise PipelineError(name, exc) from exc


def _empty_table(scope: Scope, k: int) -> TermTable:
    return TermTable(scope, (), k)


def build_place_ontology(
    query: PlaceQuery,
    corpus: Sequence[GeoPost],
    all_posts: Sequence[GeoPost],
    region: RegionProfile,
    config: OntologyConfig | None = None,
) -> PlaceOntology:
    """Run the full pipeline for one place.

    ``corpus`` must be the keyword-matching subset of ``all_posts``
    (already noise-filtered). Stages that cannot run for a small corpus
    (< config.min_posts) are skipped: the boundary, hulls, and the
    in/out tables are then absent while the Full term table and
    classification still come back. Failures carry the stage name.
    """
    cfg = config or OntologyConfig()
    if not corpus:
        raise PipelineError("corpus", "empty keyword corpus")
    origin = region.bbox.center()
    cell_size = cfg.cell_size if cfg.cell_size is not None else region.default_cell_size

    corpus_xy = _stage("project", project_posts, corpus, origin[0], origin[1])
    all_xy = _stage("project", project_posts, all_posts, origin[0], origin[1])

    default_radius = _stage("radius", default_search_radius, corpus_xy)
    radius = _stage("radius", resolve_radius, corpus_xy, cell_size, cfg.search_radius)
    category = _stage("classify", classify_feature, default_radius, region)

    lo = project(region.bbox.min_lon, region.bbox.min_lat, origin[0], origin[1])
    hi = project(region.bbox.max_lon, region.bbox.max_lat, origin[0], origin[1])
    grid = _stage("grid", make_grid, (lo.x, lo.y, hi.x, hi.y), cell_size)

    kde_keyword = _stage("kde", kde, corpus_xy, grid, radius)
    kde_all = _stage("kde", kde, all_xy, grid, radius)
    normalized = _stage("normalize", normalize_diff, kde_keyword, kde_all)

    rasters: dict[str, Raster] = {
        "kde_keyword": kde_keyword,
        "kde_all": kde_all,
        "normalized": normalized,
    }

    full_corpus_ok = len(corpus) >= cfg.min_posts
    bset = None
    hull_convex = None
    hull_concave = None
    if full_corpus_ok:
        bset = _stage("contour", boundary_mod.contour, normalized, cfg.contour_level)
        if category is FeatureCategory.NON_POLYLINE:
            eps = cfg.dbscan_eps if cfg.dbscan_eps is not None else radius
            clusters = _stage("cluster", dbscan, corpus_xy, eps, cfg.dbscan_min_pts)
            largest = _stage("cluster", largest_cluster, clusters, corpus_xy)
            hull_convex = _stage("hulls", convex_hull, largest)
            hull_concave = _stage("hulls", concave_hull, largest, cfg.concave_k0)

    if bset is not None:
        in_posts, out_posts = _stage(
            "split", boundary_mod.split_corpus, corpus, bset, origin
        )
    else:
        in_posts, out_posts = [], []

    def _table(scope: Scope, posts: Sequence[GeoPost]) -> TermTable:
        if not posts:
            return _empty_table(scope, cfg.top_k)
        return term_table(posts, query, cfg.stopwords, cfg.top_k, scope,
                          cfg.token_mode)

    table_jobs = [
        (Scope.FULL, list(corpus)),
        (Scope.IN_CIRCLE, in_posts),
        (Scope.OUT_CIRCLE, out_posts),
    ]

    def _all_tables() -> dict[Scope, TermTable]:
        if cfg.threads > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                futures = [pool.submit(_table, scope, posts)
                           for scope, posts in table_jobs]
                return {job[0]: fut.result()
                        for job, fut in zip(table_jobs, futures)}
        return {scope: _table(scope, posts) for scope, posts in table_jobs}

    tables = _stage("terms", _all_tables)

    seasonal = _stage(
        "seasonal", _seasonal_changes,
        corpus, all_posts, origin, grid, radius, cfg,
    )

    return PlaceOntology(
        query=query,
        feature_category=category,
        default_radius=default_radius,
        boundary=bset,
        hull_convex=hull_convex,
        hull_concave=hull_concave,
        term_tables=tables,
        seasonal_changes=tuple(seasonal),
        post_count=len(corpus),
        origin=origin,
        rasters={
            **rasters,
            **{
                f"seasonal_{c.from_season.value.lower()}_{c.to_season.value.lower()}":
                    c.raster
                for c in seasonal
            },
        },
    )


def _seasonal_changes(
    corpus: Sequence[GeoPost],
    all_posts: Sequence[GeoPost],
    origin: tuple[float, float],
    grid: Raster,
    fallback_radius: float,
    cfg: OntologyConfig,
) -> list[SeasonalChange]:
    """All consecutive season pairs that have data, at the Spring radius."""
    kw_posts = slice_by_season(corpus)
    all_posts_by_season = slice_by_season(all_posts)
    kw_by_season = {
        s: project_posts(posts, origin[0], origin[1])
        for s, posts in kw_posts.items() if posts
    }
    all_by_season = {
        s: project_posts(posts, origin[0], origin[1])
        for s, posts in all_posts_by_season.items() if posts
    }
    # One radius, taken from Spring, applied to every season so the
    # surfaces stay comparable.
    spring = kw_by_season.get(Season.SPRING)
    if spring is not None and spring.shape[0] >= 2 and np.ptp(spring, axis=0).any():
        radius = default_search_radius(spring)
        if radius <= 0.0:
            radius = fallback_radius
    else:
        radius = fallback_radius

    changes: list[SeasonalChange] = []
    pairs = [(SEASON_CYCLE[i], SEASON_CYCLE[(i + 1) % 4]) for i in range(4)]

    def has_data(season: Season) -> bool:
        if season not in kw_by_season:
            return False
        if cfg.seasonal_mode is ChangeMode.NORMALIZED:
            return season in all_by_season
        return True

    wanted = [(f, t) for f, t in pairs if has_data(f) and has_data(t)]

    def compute(pair: tuple[Season, Season]) -> SeasonalChange:
        return seasonal_change(
            kw_by_season, all_by_season, pair[0], pair[1],
            cfg.seasonal_mode, grid, radius,
        )

    if cfg.threads > 1 and len(wanted) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            changes = list(pool.map(compute, wanted))
    else:
        changes = [compute(pair) for pair in wanted]
    return changes


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def ontology_to_json(
    ontology: PlaceOntology,
    raster_refs: Mapping[str, str] | None = None,
) -> str:
    """Single JSON document (schema placescope/1) with embedded GeoJSON.

    ``raster_refs`` maps raster names to the file names they were
    written under; omitted rasters are referenced as null.
    """
    refs = raster_refs or {}

    def hull_obj(hull: Hull | None):
        if hull is None:
            return None
        ring_set = boundary_mod.BoundarySet(
            (hull.ring,), level=0.0, source_grid=None
        )
        obj = json.loads(
            boundary_mod.to_geojson(ring_set, ontology.origin)
        )
        obj["properties"] = {"kind": hull.kind.value, "k_used": hull.k_used}
        return obj

    boundary_obj = None
    if ontology.boundary is not None:
        boundary_obj = json.loads(
            boundary_mod.to_geojson(ontology.boundary, ontology.origin)
        )

    doc = {
        "schema": "placescope/1",
        "place": {
            "canonical_name": ontology.query.canonical_name,
            "aliases": list(ontology.query.aliases),
        },
        "feature_category": ontology.feature_category.value,
        "default_radius_m": ontology.default_radius,
        "post_count": ontology.post_count,
        "origin": {"lon": ontology.origin[0], "lat": ontology.origin[1]},
        "boundary": boundary_obj,
        "hull_convex": hull_obj(ontology.hull_convex),
        "hull_concave": hull_obj(ontology.hull_concave),
        "term_tables": {
            scope.value: [
                {"term": r.term, "pmi": r.pmi, "frequency": r.frequency}
                for r in table.rows
            ]
            for scope, table in sorted(
                ontology.term_tables.items(), key=lambda kv: kv[0].value
            )
        },
        "seasonal_changes": [
            {
                "from": c.from_season.value,
                "to": c.to_season.value,
                "mode": c.mode.value,
                "raster": refs.get(
                    f"seasonal_{c.from_season.value.lower()}"
                    f"_{c.to_season.value.lower()}"
                ),
            }
            for c in ontology.seasonal_changes
        ],
        "rasters": {name: refs.get(name) for name in sorted(ontology.rasters)},
    }
    return json.dumps(doc, ensure_ascii=False, indent=2) + "\n"
