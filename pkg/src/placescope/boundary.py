"""Contour boundaries from rasters, membership tests, areas, GeoJSON.

The contour extractor runs marching squares over the raster's cell
centers with one ring of virtual samples pinned exactly at the contour
level just outside the lattice. That closes every ring without special
border cases; rings are then clamped to the raster extent rectangle.
"inside" means strictly greater than the level, everywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kde import Raster, as_xy, project_posts, unproject

__all__ = [
    "BoundarySet",
    "contour",
    "contains",
    "contains_many",
    "split_corpus",
    "area",
    "to_geojson",
]


@dataclass(frozen=True, eq=False)
class BoundarySet:
    """Simple closed rings (CCW, not explicitly closed) plus provenance.

    All rings are exterior under the even-odd rule; nesting expresses
    holes implicitly. ``source_grid`` echoes the originating raster's
    geometry tuple when the set came from :func:`contour`.
    """

    polygons: tuple[np.ndarray, ...]
    level: float
    source_grid: tuple | None = None

    def __post_init__(self):
        checked = []
        for ring in self.polygons:
            arr = np.ascontiguousarray(np.asarray(ring, dtype=np.float64))
            if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
                raise ValueError(
                    f"each ring needs >= 3 (x, y) vertices, got shape {arr.shape}"
                )
            if not np.all(np.isfinite(arr)):
                raise ValueError("ring vertices must be finite")
            arr.setflags(write=False)
            checked.append(arr)
        object.__setattr__(self, "polygons", tuple(checked))


# ---------------------------------------------------------------------------
# Marching squares
# ---------------------------------------------------------------------------

# Directed segments per corner-occupancy case, with the inside region on
# the left of each segment (y-up axes). Corners: bl=1, br=2, tr=4, tl=8;
# edges are named B(ottom), R(ight), T(op), L(eft). Saddle cases 5/10
# are resolved by the cell-center average at runtime.
_CASE_SEGMENTS: dict[int, tuple[tuple[str, str], ...]] = {
    0: (),
    1: (("B", "L"),),
    2: (("R", "B"),),
    3: (("R", "L"),),
    4: (("T", "R"),),
    6: (("T", "B"),),
    7: (("T", "L"),),
    8: (("L", "T"),),
    9: (("B", "T"),),
    11: (("R", "T"),),
    12: (("L", "R"),),
    13: (("B", "R"),),
    14: (("L", "B"),),
    15: (),
}

# For each edge of the marching cell whose lower-left sample is (i, j):
# the two padded-lattice samples it joins and its global edge key.
_EDGE_SAMPLES = {
    "B": lambda i, j: ((i, j), (i, j + 1), ("h", i, j)),
    "T": lambda i, j: ((i + 1, j), (i + 1, j + 1), ("h", i + 1, j)),
    "L": lambda i, j: ((i, j), (i + 1, j), ("v", i, j)),
    "R": lambda i, j: ((i, j + 1), (i + 1, j + 1), ("v", i, j + 1)),
}


def contour(raster: Raster, level: float) -> BoundarySet:
    """Rings enclosing the regions where raster value > level.

    Vertices sit on lattice edges by linear interpolation; regions
    touching the raster border are clamped to the extent rectangle.
    An empty set is a valid result (everything at or below the level).
    """
    n_rows, n_cols = raster.n_rows, raster.n_cols
    pad = np.full((n_rows + 2, n_cols + 2), float(level), dtype=np.float64)
    pad[1:-1, 1:-1] = raster.values
    # Sample positions continue the cell-center lattice one step outward.
    cs = raster.cell_size
    sx = raster.origin_x + (np.arange(n_cols + 2) - 0.5) * cs
    sy = raster.origin_y + (np.arange(n_rows + 2) - 0.5) * cs
    inside = pad > level

    def crossing(sample_a, sample_b):
        """Interpolated crossing point; a is the inside sample."""
        (ia, ja), (ib, jb) = sample_a, sample_b
        va = pad[ia, ja]
        vb = pad[ib, jb]
        t = (va - level) / (va - vb)
        x = sx[ja] + t * (sx[jb] - sx[ja])
        y = sy[ia] + t * (sy[ib] - sy[ia])
        return (x, y)

    segments: dict[tuple, tuple] = {}

    def emit(i, j, start_edge, end_edge):
        points = {}
        keys = {}
        for edge in (start_edge, end_edge):
            sample_1, sample_2, key = _EDGE_SAMPLES[edge](i, j)
            if inside[sample_1]:
                points[edge] = crossing(sample_1, sample_2)
            else:
                points[edge] = crossing(sample_2, sample_1)
            keys[edge] = key
        segments[keys[start_edge]] = (
            keys[end_edge], points[start_edge], points[end_edge],
        )

    for i in range(n_rows + 1):
        for j in range(n_cols + 1):
            case = (
                (1 if inside[i, j] else 0)
                | (2 if inside[i, j + 1] else 0)
                | (4 if inside[i + 1, j + 1] else 0)
                | (8 if inside[i + 1, j] else 0)
            )
            if case in (0, 15):
                continue
            if case == 5 or case == 10:
                center = (pad[i, j] + pad[i, j + 1]
                          + pad[i + 1, j + 1] + pad[i + 1, j]) / 4.0
                if case == 5:
                    pairs = ((("B", "R"), ("T", "L")) if center > level
                             else (("B", "L"), ("T", "R")))
                else:
                    pairs = ((("L", "B"), ("R", "T")) if center > level
                             else (("R", "B"), ("L", "T")))
                for start_edge, end_edge in pairs:
                    emit(i, j, start_edge, end_edge)
            else:
                for start_edge, end_edge in _CASE_SEGMENTS[case]:
                    emit(i, j, start_edge, end_edge)

    raw_rings = _link_segments(segments)
    extent = raster.extent()
    rings: list[np.ndarray] = []
    for ring in raw_rings:
        pts = _dedupe_closed(ring)
        if len(pts) < 3:
            continue
        if _signed_area(pts) < 0.0:
            pts.reverse()
        pts = _clip_to_rect(pts, extent)
        pts = _dedupe_closed(pts)
        if len(pts) < 3 or _signed_area(pts) == 0.0:
            continue
        rings.append(np.asarray(pts, dtype=np.float64))
    return BoundarySet(tuple(rings), float(level), raster.geometry())


def _link_segments(segments: dict) -> list[list[tuple[float, float]]]:
    """Chain directed segments into closed rings via shared edge keys."""
    rings = []
    visited: set = set()
    for start_key in list(segments.keys()):
        if start_key in visited:
            continue
        ring: list[tuple[float, float]] = []
        key = start_key
        while True:
            end_key, p_start, _p_end = segments[key]
            visited.add(key)
            ring.append(p_start)
            key = end_key
            if key == start_key:
                break
        rings.append(ring)
    return rings


def _dedupe_closed(pts: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    """Drop consecutive duplicate vertices, treating the ring as closed."""
    out: list[tuple[float, float]] = []
    for p in pts:
        if not out or p != out[-1]:
            out.append(p)
    while len(out) > 1 and out[0] == out[-1]:
        out.pop()
    return out


def _signed_area(pts: Sequence[tuple[float, float]]) -> float:
    total = 0.0
    n = len(pts)
    for k in range(n):
        x1, y1 = pts[k]
        x2, y2 = pts[(k + 1) % n]
        total += x1 * y2 - x2 * y1
    return 0.5 * total


def _clip_to_rect(pts, extent):
    """Sutherland-Hodgman clip of a ring to an axis-aligned rectangle."""
    min_x, min_y, max_x, max_y = extent

    def clip(points, keep, cross_point):
        out = []
        n = len(points)
        for idx in range(n):
            cur = points[idx]
            prev = points[idx - 1]
            cur_in = keep(cur)
            if keep(prev) != cur_in:
                out.append(cross_point(prev, cur))
            if cur_in:
                out.append(cur)
        return out

    def at_x(bound):
        def point(p, q):
            t = (bound - p[0]) / (q[0] - p[0])
            return (bound, p[1] + t * (q[1] - p[1]))
        return point

    def at_y(bound):
        def point(p, q):
            t = (bound - p[1]) / (q[1] - p[1])
            return (p[0] + t * (q[0] - p[0]), bound)
        return point

    for keep, cross_point in (
        (lambda p: p[0] >= min_x, at_x(min_x)),
        (lambda p: p[0] <= max_x, at_x(max_x)),
        (lambda p: p[1] >= min_y, at_y(min_y)),
        (lambda p: p[1] <= max_y, at_y(max_y)),
    ):
        pts = clip(pts, keep, cross_point)
        if not pts:
            return []
    return pts


# ---------------------------------------------------------------------------
# Membership, area, splitting
# ---------------------------------------------------------------------------

def contains_many(bset: BoundarySet, points) -> np.ndarray:
    """Even-odd membership for many points at once; on-edge counts inside."""
    xy = as_xy(points)
    x = xy[:, 0]
    y = xy[:, 1]
    inside = np.zeros(len(xy), dtype=bool)
    on_edge = np.zeros(len(xy), dtype=bool)
    for ring in bset.polygons:
        n = len(ring)
        for k in range(n):
            ax, ay = ring[k]
            bx, by = ring[(k + 1) % n]
            cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax)
            on_edge |= (
                (cross == 0.0)
                & (x >= min(ax, bx)) & (x <= max(ax, bx))
                & (y >= min(ay, by)) & (y <= max(ay, by))
            )
            if ay != by:
                straddles = (ay > y) != (by > y)
                x_at = ax + (y - ay) * (bx - ax) / (by - ay)
                inside ^= straddles & (x < x_at)
    return inside | on_edge


def contains(bset: BoundarySet, p) -> bool:
    """Even-odd membership of one point; on-edge counts inside."""
    if hasattr(p, "x"):
        xy = [(p.x, p.y)]
    else:
        xy = [(float(p[0]), float(p[1]))]
    return bool(contains_many(bset, xy)[0])


def split_corpus(posts: Sequence, bset: BoundarySet,
                 origin: tuple[float, float]) -> tuple[list, list]:
    """Partition posts into (inside, outside) of the boundary.

    ``origin`` is the (lon, lat) projection origin the boundary's planar
    coordinates refer to. Order is preserved within each part.
    """
    if not posts:
        return [], []
    xy = project_posts(posts, origin[0], origin[1])
    mask = contains_many(bset, xy)
    in_posts = [p for p, m in zip(posts, mask) if m]
    out_posts = [p for p, m in zip(posts, mask) if not m]
    return in_posts, out_posts


def area(bset: BoundarySet) -> float:
    """Sum of absolute shoelace areas over all rings (square meters)."""
    return float(sum(abs(_signed_area([tuple(v) for v in ring]))
                     for ring in bset.polygons))


def to_geojson(bset: BoundarySet, origin: tuple[float, float]) -> str:
    """RFC 7946 Feature with a MultiPolygon in lon/lat (7 decimals)."""
    origin_lon, origin_lat = origin
    coordinates = []
    for ring in bset.polygons:
        lonlat = [
            [round(c, 7) for c in unproject(x, y, origin_lon, origin_lat)]
            for x, y in ring
        ]
        lonlat.append(lonlat[0])
        coordinates.append([lonlat])
    feature = {
        "type": "Feature",
        "geometry": {"type": "MultiPolygon", "coordinates": coordinates},
        "properties": {
            "level": bset.level,
            "ring_count": len(bset.polygons),
        },
    }
    return json.dumps(feature, ensure_ascii=False)
