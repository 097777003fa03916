"""Synthetic corpora with known ground truth, and boundary scoring.

Every generator draws from numpy's PCG64 via ``default_rng(seed)``. The
draw order is part of the data format and must not change:

* gen_blob: offsets (n x 2 normals), season codes (n), timestamp
  fractions (n), then the n x len(vocab) inclusion uniforms.
* gen_uniform: lons (n), lats (n), timestamp fractions (n), then the
  n x 3 word-index draws.
* gen_polyline: arc-length fractions (n), perpendicular offsets (n),
  season codes (n), timestamp fractions (n), inclusion uniforms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateGeometryError
from .ingest import BoundingBox, GeoPost, Platform, Season, SEASON_CYCLE
from .kde import as_xy, unproject

__all__ = [
    "TruthKind",
    "TruthSpec",
    "NEUTRAL_VOCAB",
    "gen_blob",
    "gen_uniform",
    "gen_polyline",
    "iou",
    "truth_region_geojson",
]


class TruthKind(Enum):
    DISK = "Disk"
    POLYLINE = "Polyline"


#: Background chatter for posts that must not mention the place.
NEUTRAL_VOCAB: tuple[str, ...] = (
    "coffee", "traffic", "sunset", "music", "rain",
    "lunch", "weekend", "beach", "game", "morning",
)

_DEFAULT_VOCAB: tuple[tuple[str, float], ...] = (
    ("campus", 0.4),
    ("students", 0.3),
    ("game", 0.2),
    ("library", 0.2),
)


def _season_window(season: Season, year: int) -> tuple[datetime, datetime]:
    utc = timezone.utc
    if season is Season.SPRING:
        return datetime(year, 3, 1, tzinfo=utc), datetime(year, 6, 1, tzinfo=utc)
    if season is Season.SUMMER:
        return datetime(year, 6, 1, tzinfo=utc), datetime(year, 9, 1, tzinfo=utc)
    if season is Season.FALL:
        return datetime(year, 9, 1, tzinfo=utc), datetime(year, 12, 1, tzinfo=utc)
    return datetime(year, 12, 1, tzinfo=utc), datetime(year + 1, 3, 1, tzinfo=utc)


@dataclass(frozen=True)
class TruthSpec:
    """Generator parameters plus the ground-truth region they imply.

    ``sigma`` is the Gaussian spread in meters; the truth region is the
    disk of radius 2 sigma about the center (Disk kind) or the polyline
    buffered by 2 sigma (Polyline kind). Planar coordinates refer to the
    local projection about (origin_lon, origin_lat).
    """

    kind: TruthKind
    seed: int
    sigma: float
    place_name: str
    center: tuple[float, float] | None = None
    vertices: tuple[tuple[float, float], ...] | None = None
    season_weights: Mapping[Season, float] = field(
        default_factory=lambda: {s: 1.0 for s in SEASON_CYCLE}
    )
    vocab: tuple[tuple[str, float], ...] = _DEFAULT_VOCAB
    origin_lon: float = 0.0
    origin_lat: float = 0.0
    year: int = 2015

    def __post_init__(self):
        if not self.place_name:
            raise ValueError("place_name must be non-empty")
        if self.kind is TruthKind.DISK:
            if self.sigma <= 0:
                raise ValueError("sigma must be positive for a disk place")
            if self.center is None:
                raise ValueError("disk place needs a center")
        else:
            if self.sigma < 0:
                raise ValueError("sigma must be non-negative")
            if self.vertices is None or len(self.vertices) < 2:
                raise ValueError("polyline place needs >= 2 vertices")
        weights = {s: float(self.season_weights.get(s, 0.0)) for s in SEASON_CYCLE}
        if any(w < 0 for w in weights.values()):
            raise ValueError("season weights must be non-negative")
        if sum(weights.values()) <= 0:
            raise ValueError("at least one season weight must be positive")
        object.__setattr__(self, "season_weights", weights)
        for term, prob in self.vocab:
            if not term or not 0.0 <= prob <= 1.0:
                raise ValueError(f"bad vocab entry: ({term!r}, {prob})")

    def truth_region(self) -> np.ndarray:
        """Ground-truth polygon ring (planar, CCW)."""
        if self.kind is TruthKind.DISK:
            return _disk_ring(self.center, 2.0 * self.sigma)
        if self.sigma <= 0:
            raise DegenerateGeometryError(
                "polyline truth region needs sigma > 0 to have width"
            )
        return _buffer_polyline(np.asarray(self.vertices, float), 2.0 * self.sigma)

    @classmethod
    def from_dict(cls, obj: Mapping) -> "TruthSpec":
        """Build from a JSON-style config block."""
        kind = TruthKind(obj["kind"])
        weights = {Season(k): float(v)
                   for k, v in obj.get("season_weights", {}).items()}
        if not weights:
            weights = {s: 1.0 for s in SEASON_CYCLE}
        vocab = tuple((str(t), float(p)) for t, p in obj.get("vocab", _DEFAULT_VOCAB))
        return cls(
            kind=kind,
            seed=int(obj["seed"]),
            sigma=float(obj["sigma"]),
            place_name=str(obj["place_name"]),
            center=tuple(obj["center"]) if "center" in obj else None,
            vertices=tuple(tuple(v) for v in obj["vertices"])
            if "vertices" in obj else None,
            season_weights=weights,
            vocab=vocab,
            origin_lon=float(obj.get("origin_lon", 0.0)),
            origin_lat=float(obj.get("origin_lat", 0.0)),
            year=int(obj.get("year", 2015)),
        )


def _disk_ring(center: tuple[float, float], radius: float, segments: int = 128) -> np.ndarray:
    angles = np.linspace(0.0, 2.0 * math.pi, segments, endpoint=False)
    return np.column_stack([
        center[0] + radius * np.cos(angles),
        center[1] + radius * np.sin(angles),
    ])


def _buffer_polyline(vertices: np.ndarray, width: float) -> np.ndarray:
    """Flat-capped miter offset outline; adequate for gently bent lines."""
    left = []
    right = []
    for i in range(len(vertices) - 1):
        a, b = vertices[i], vertices[i + 1]
        seg = b - a
        length = math.hypot(seg[0], seg[1])
        if length == 0:
            continue
        normal = np.array([-seg[1], seg[0]]) / length
        left.append((a + normal * width, b + normal * width))
        right.append((a - normal * width, b - normal * width))
    if not left:
        raise DegenerateGeometryError("polyline has zero length")
    ring = [pt for seg in left for pt in seg]
    ring.extend(pt for seg in reversed(right) for pt in reversed(seg))
    return np.asarray(ring, dtype=np.float64)


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

def _season_codes(rng: np.random.Generator, weights: Mapping[Season, float],
                  n: int) -> np.ndarray:
    probs = np.array([weights[s] for s in SEASON_CYCLE], dtype=np.float64)
    probs = probs / probs.sum()
    return rng.choice(len(SEASON_CYCLE), size=n, p=probs)


def _timestamp(season: Season, year: int, fraction: float) -> datetime:
    start, end = _season_window(season, year)
    seconds = int(fraction * (end - start).total_seconds())
    return start + timedelta(seconds=seconds)


def _texts_with_place(spec: TruthSpec, inclusion: np.ndarray) -> list[str]:
    texts = []
    for row in inclusion:
        words = [spec.place_name]
        words.extend(term for (term, prob), u in zip(spec.vocab, row) if u < prob)
        texts.append(" ".join(words))
    return texts


def _posts_from_planar(
    spec: TruthSpec,
    xy: np.ndarray,
    codes: np.ndarray,
    fractions: np.ndarray,
    texts: list[str],
    id_prefix: str,
) -> list[GeoPost]:
    posts = []
    for i in range(len(xy)):
        lon, lat = unproject(xy[i, 0], xy[i, 1], spec.origin_lon, spec.origin_lat)
        season = SEASON_CYCLE[int(codes[i])]
        posts.append(GeoPost(
            id=f"{id_prefix}-{spec.seed:08x}-{i:06d}",
            timestamp=_timestamp(season, spec.year, float(fractions[i])),
            lon=lon,
            lat=lat,
            text=texts[i],
            source="synthetic",
            platform=Platform.TWITTER,
        ))
    return posts


def gen_blob(spec: TruthSpec, n: int) -> list[GeoPost]:
    """n posts scattered isotropically (sigma) about the disk center.

    Every text starts with the place name; deterministic per seed.
    """
    if spec.kind is not TruthKind.DISK:
        raise ValueError("gen_blob needs a Disk spec")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(spec.seed)
    offsets = rng.normal(0.0, spec.sigma, size=(n, 2))
    codes = _season_codes(rng, spec.season_weights, n)
    fractions = rng.random(n)
    inclusion = rng.random((n, len(spec.vocab)))
    xy = np.asarray(spec.center, dtype=np.float64) + offsets
    texts = _texts_with_place(spec, inclusion)
    return _posts_from_planar(spec, xy, codes, fractions, texts, "blob")


def gen_uniform(bbox: BoundingBox, n: int, seed: int) -> list[GeoPost]:
    """n posts uniform over a lon/lat bbox with neutral vocabulary.

    Timestamps are uniform over the calendar year 2015; texts never
    contain a place name (three neutral words each).
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = np.random.default_rng(seed)
    lons = rng.uniform(bbox.min_lon, bbox.max_lon, n)
    lats = rng.uniform(bbox.min_lat, bbox.max_lat, n)
    fractions = rng.random(n)
    word_idx = rng.integers(0, len(NEUTRAL_VOCAB), size=(n, 3))
    utc = timezone.utc
    start = datetime(2015, 1, 1, tzinfo=utc)
    total = (datetime(2016, 1, 1, tzinfo=utc) - start).total_seconds()
    posts = []
    for i in range(n):
        text = " ".join(NEUTRAL_VOCAB[j] for j in word_idx[i])
        posts.append(GeoPost(
            id=f"bg-{seed:08x}-{i:06d}",
            timestamp=start + timedelta(seconds=int(fractions[i] * total)),
            lon=float(lons[i]),
            lat=float(lats[i]),
            text=text,
            source="synthetic",
            platform=Platform.TWITTER,
        ))
    return posts


def gen_polyline(spec: TruthSpec, n: int) -> list[GeoPost]:
    """n posts spread uniformly by arc length with perpendicular jitter."""
    if spec.kind is not TruthKind.POLYLINE:
        raise ValueError("gen_polyline needs a Polyline spec")
    if n < 1:
        raise ValueError("n must be >= 1")
    vertices = np.asarray(spec.vertices, dtype=np.float64)
    seg = np.diff(vertices, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    total = float(seg_len.sum())
    if total <= 0:
        raise DegenerateGeometryError("polyline has zero length")
    cumulative = np.concatenate([[0.0], np.cumsum(seg_len)])

    rng = np.random.default_rng(spec.seed)
    arc_fracs = rng.random(n)
    perp = rng.normal(0.0, spec.sigma, n) if spec.sigma > 0 else np.zeros(n)
    codes = _season_codes(rng, spec.season_weights, n)
    fractions = rng.random(n)
    inclusion = rng.random((n, len(spec.vocab)))

    s = arc_fracs * total
    seg_idx = np.clip(np.searchsorted(cumulative, s, side="right") - 1,
                      0, len(seg_len) - 1)
    xy = np.empty((n, 2), dtype=np.float64)
    for i in range(n):
        j = int(seg_idx[i])
        if seg_len[j] == 0:
            base = vertices[j]
            normal = np.zeros(2)
        else:
            t = (s[i] - cumulative[j]) / seg_len[j]
            base = vertices[j] + t * seg[j]
            normal = np.array([-seg[j, 1], seg[j, 0]]) / seg_len[j]
        xy[i] = base + perp[i] * normal
    texts = _texts_with_place(spec, inclusion)
    return _posts_from_planar(spec, xy, codes, fractions, texts, "line")


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------

def _rasterize(rings: Sequence[np.ndarray], xs: np.ndarray,
               ys: np.ndarray) -> np.ndarray:
    """Even-odd membership of a grid of points in a union of rings."""
    inside = np.zeros(xs.shape, dtype=bool)
    for ring in rings:
        n = len(ring)
        for k in range(n):
            ax, ay = ring[k]
            bx, by = ring[(k + 1) % n]
            if ay == by:
                continue
            straddles = (ay > ys) != (by > ys)
            x_at = ax + (ys - ay) * (bx - ax) / (by - ay)
            inside ^= straddles & (xs < x_at)
    return inside


def iou(bset, truth_region) -> float:
    """Intersection over union on a 512 x 512 raster of the joint bbox."""
    rings_b = list(bset.polygons) if bset is not None else []
    truth = None
    if truth_region is not None:
        truth = as_xy(truth_region)
        if truth.shape[0] < 3:
            truth = None
    all_rings = rings_b + ([truth] if truth is not None else [])
    if not all_rings:
        return 0.0
    stacked = np.vstack(all_rings)
    min_x, min_y = stacked.min(axis=0)
    max_x, max_y = stacked.max(axis=0)
    if not (min_x < max_x and min_y < max_y):
        return 0.0
    n = 512
    xs = min_x + (np.arange(n) + 0.5) * (max_x - min_x) / n
    ys = min_y + (np.arange(n) + 0.5) * (max_y - min_y) / n
    grid_x, grid_y = np.meshgrid(xs, ys)
    in_b = _rasterize(rings_b, grid_x, grid_y) if rings_b else \
        np.zeros(grid_x.shape, dtype=bool)
    in_t = _rasterize([truth], grid_x, grid_y) if truth is not None else \
        np.zeros(grid_x.shape, dtype=bool)
    union = int(np.count_nonzero(in_b | in_t))
    if union == 0:
        return 0.0
    inter = int(np.count_nonzero(in_b & in_t))
    return inter / union


def truth_region_geojson(spec: TruthSpec) -> str:
    """The truth region as a lon/lat GeoJSON Feature (7 decimals)."""
    ring = spec.truth_region()
    lonlat = [
        [round(c, 7) for c in unproject(x, y, spec.origin_lon, spec.origin_lat)]
        for x, y in ring
    ]
    lonlat.append(lonlat[0])
    feature = {
        "type": "Feature",
        "geometry": {"type": "Polygon", "coordinates": [lonlat]},
        "properties": {"kind": spec.kind.value, "sigma_m": spec.sigma},
    }
    return json.dumps(feature, ensure_ascii=False)
