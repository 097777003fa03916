"""Place footprints, semantics, and seasonal dynamics from geotagged posts.

The pipeline turns a noisy stream of geotagged social-media posts into a
place ontology: a density-derived boundary polygon, a feature-category
call (compact place vs. line feature), PMI-ranked descriptive terms
inside and outside the boundary, and season-over-season change surfaces.
"""

from .boundary import BoundarySet, area, contains, contour, split_corpus, to_geojson
from .cluster import (
    NOISE,
    ClusterResult,
    Hull,
    HullKind,
    concave_hull,
    convex_hull,
    dbscan,
    dmdbscan,
    ward_cluster,
)
from .errors import (
    DegenerateGeometryError,
    DegenerateInputError,
    GridMismatchError,
    NoCooccurrence,
    ParseError,
    PipelineError,
    PlacescopeError,
)
from .ingest import (
    BoundingBox,
    GeoPost,
    NoiseReport,
    PlaceQuery,
    Platform,
    Season,
    filter_noise,
    parse_posts,
    query_keyword,
    read_posts,
    slice_by_season,
)
from .kde import (
    ChangeMode,
    Raster,
    default_search_radius,
    kde,
    make_grid,
    normalize_diff,
    project,
    seasonal_change,
    unproject,
)
from .ontology import (
    REGION_PRESETS,
    FeatureCategory,
    OntologyConfig,
    PlaceOntology,
    RegionProfile,
    build_place_ontology,
    classify_feature,
    ontology_to_json,
)
from .semantic import Scope, TermTable, TokenMode, pmi, term_table, tokenize
from .synth import TruthKind, TruthSpec, gen_blob, gen_polyline, gen_uniform, iou

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "PlacescopeError", "ParseError", "DegenerateInputError",
    "DegenerateGeometryError", "GridMismatchError", "NoCooccurrence",
    "PipelineError",
    # ingest
    "GeoPost", "BoundingBox", "PlaceQuery", "NoiseReport", "Platform",
    "Season", "parse_posts", "read_posts", "filter_noise", "query_keyword",
    "slice_by_season",
    # kde
    "Raster", "ChangeMode", "project", "unproject", "default_search_radius",
    "make_grid", "kde", "normalize_diff", "seasonal_change",
    # boundary
    "BoundarySet", "contour", "contains", "split_corpus", "area", "to_geojson",
    # cluster
    "NOISE", "ClusterResult", "Hull", "HullKind", "dbscan", "dmdbscan",
    "ward_cluster", "convex_hull", "concave_hull",
    # semantic
    "Scope", "TokenMode", "TermTable", "tokenize", "pmi", "term_table",
    # ontology
    "FeatureCategory", "RegionProfile", "REGION_PRESETS", "OntologyConfig",
    "PlaceOntology", "classify_feature", "build_place_ontology",
    "ontology_to_json",
    # synth
    "TruthKind", "TruthSpec", "gen_blob", "gen_uniform", "gen_polyline", "iou",
]
