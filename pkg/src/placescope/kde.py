"""Planar projection, raster grids, quartic-kernel KDE, and map algebra.

Conventions used throughout:

* Planar coordinates are meters in a local equirectangular projection
  about the study-area centroid.
* Raster row 0 is the *southernmost* row; values are evaluated at cell
  centers. The ESRI ASCII export flips to north-first per that format.
* KDE accumulation order is fixed (points in input order, one running
  float64 sum per cell), so results are bit-reproducible and match a
  per-cell scalar summation that follows the same expression shapes:

      coef = 3.0 / (pi * radius * radius)
      d2   = dx*dx + dy*dy          # cell center minus point
      u    = 1.0 - d2 / (radius*radius)
      cell += coef * (u * u)        # only where d2 < radius*radius
"""

from __future__ import annotations

import math
import os
import struct
import tempfile
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DegenerateInputError, GridMismatchError
from .ingest import Season, SEASON_CYCLE

__all__ = [
    "EARTH_RADIUS_M",
    "PlanarPoint",
    "KdeConfig",
    "Raster",
    "ChangeMode",
    "SeasonalChange",
    "project",
    "unproject",
    "project_posts",
    "as_xy",
    "default_search_radius",
    "resolve_radius",
    "make_grid",
    "kde",
    "normalize_diff",
    "seasonal_change",
    "write_ascii_grid",
    "read_ascii_grid",
    "write_binary_grid",
    "read_binary_grid",
]

EARTH_RADIUS_M = 6_371_008.8  # IUGG mean radius
MAX_SPAN_DEG = 5.0  # equirectangular error grows with span; refuse beyond this


@dataclass(frozen=True)
class PlanarPoint:
    """Meters east/north of the projection origin."""

    x: float
    y: float


class ChangeMode(Enum):
    ABSOLUTE = "Absolute"
    NORMALIZED = "Normalized"


@dataclass(frozen=True)
class KdeConfig:
    """KDE parameters; ``search_radius=None`` means the data-driven default."""

    cell_size: float = 100.0
    search_radius: float | None = None

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.search_radius is not None and self.search_radius <= 0:
            raise ValueError("explicit search_radius must be positive")


@dataclass(frozen=True, eq=False)
class Raster:
    """A planar grid of float64 values; immutable after construction."""

    origin_x: float
    origin_y: float
    cell_size: float
    n_cols: int
    n_rows: int
    values: np.ndarray  # shape (n_rows, n_cols); row 0 = south

    def __post_init__(self):
        object.__setattr__(self, "origin_x", float(self.origin_x))
        object.__setattr__(self, "origin_y", float(self.origin_y))
        object.__setattr__(self, "cell_size", float(self.cell_size))
        object.__setattr__(self, "n_cols", int(self.n_cols))
        object.__setattr__(self, "n_rows", int(self.n_rows))
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.n_cols < 1 or self.n_rows < 1:
            raise ValueError("raster must have at least one cell")
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if arr.shape != (self.n_rows, self.n_cols):
            raise ValueError(
                f"values shape {arr.shape} != (n_rows, n_cols) "
                f"= ({self.n_rows}, {self.n_cols})"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("raster values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "_max_value", float(arr.max()))

    @property
    def max_value(self) -> float:
        return self._max_value  # type: ignore[attr-defined]

    def geometry(self) -> tuple[float, float, float, int, int]:
        return (self.origin_x, self.origin_y, self.cell_size,
                self.n_cols, self.n_rows)

    def same_geometry(self, other: "Raster") -> bool:
        return self.geometry() == other.geometry()

    def with_values(self, values: np.ndarray) -> "Raster":
        return Raster(self.origin_x, self.origin_y, self.cell_size,
                      self.n_cols, self.n_rows, values)

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (self.origin_x + (col + 0.5) * self.cell_size,
                self.origin_y + (row + 0.5) * self.cell_size)

    def col_centers(self) -> np.ndarray:
        return self.origin_x + (np.arange(self.n_cols) + 0.5) * self.cell_size

    def row_centers(self) -> np.ndarray:
        return self.origin_y + (np.arange(self.n_rows) + 0.5) * self.cell_size

    def extent(self) -> tuple[float, float, float, float]:
        """(min_x, min_y, max_x, max_y) of the covered rectangle."""
        return (self.origin_x, self.origin_y,
                self.origin_x + self.n_cols * self.cell_size,
                self.origin_y + self.n_rows * self.cell_size)


@dataclass(frozen=True)
class SeasonalChange:
    """Signed change raster between two consecutive seasons."""

    from_season: Season
    to_season: Season
    mode: ChangeMode
    raster: Raster


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------

def project(lon: float, lat: float, origin_lon: float, origin_lat: float) -> PlanarPoint:
    """Local equirectangular projection: exact inverse, city-scale only.

    x = R * dlon * cos(origin_lat), y = R * dlat (angles in radians).
    Offsets beyond 5 degrees from the origin are rejected rather than
    silently distorted.
    """
    if not (-180.0 <= lon <= 180.0 and -90.0 <= lat <= 90.0):
        raise ValueError(f"coordinates out of range: ({lon}, {lat})")
    if not (-180.0 <= origin_lon <= 180.0 and -90.0 <= origin_lat <= 90.0):
        raise ValueError(f"origin out of range: ({origin_lon}, {origin_lat})")
    if abs(origin_lat) == 90.0:
        raise ValueError("projection origin at a pole is unsupported")
    if abs(lon - origin_lon) > MAX_SPAN_DEG or abs(lat - origin_lat) > MAX_SPAN_DEG:
        raise ValueError(
            f"point ({lon}, {lat}) is more than {MAX_SPAN_DEG} degrees from "
            f"origin ({origin_lon}, {origin_lat}); projection unsuitable"
        )
    x = EARTH_RADIUS_M * math.radians(lon - origin_lon) * math.cos(math.radians(origin_lat))
    y = EARTH_RADIUS_M * math.radians(lat - origin_lat)
    return PlanarPoint(x, y)


def unproject(x: float, y: float, origin_lon: float, origin_lat: float) -> tuple[float, float]:
    """Inverse of :func:`project`; round-trips within 1e-9 degrees."""
    if abs(origin_lat) == 90.0:
        raise ValueError("projection origin at a pole is unsupported")
    cos_lat = math.cos(math.radians(origin_lat))
    lon = origin_lon + math.degrees(x / (EARTH_RADIUS_M * cos_lat))
    lat = origin_lat + math.degrees(y / EARTH_RADIUS_M)
    return lon, lat


def project_posts(posts: Sequence, origin_lon: float, origin_lat: float) -> np.ndarray:
    """Project a post sequence to an (n, 2) planar array, input order kept."""
    out = np.empty((len(posts), 2), dtype=np.float64)
    for i, post in enumerate(posts):
        p = project(post.lon, post.lat, origin_lon, origin_lat)
        out[i, 0] = p.x
        out[i, 1] = p.y
    return out


def as_xy(points) -> np.ndarray:
    """Coerce PlanarPoint sequences / tuples / arrays to an (n, 2) array."""
    if isinstance(points, np.ndarray):
        arr = np.asarray(points, dtype=np.float64)
    else:
        rows = []
        for p in points:
            if isinstance(p, PlanarPoint):
                rows.append((p.x, p.y))
            else:
                rows.append((float(p[0]), float(p[1])))
        arr = np.asarray(rows, dtype=np.float64).reshape(-1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected (n, 2) points, got shape {arr.shape}")
    return arr


# ---------------------------------------------------------------------------
# Default search radius
# ---------------------------------------------------------------------------

def default_search_radius(points) -> float:
    """0.9 * min(SD, sqrt(1/ln 2) * Dm) * n^(-0.2).

    SD is the root-mean-square distance to the mean center and Dm the
    median distance to it. Raises on fewer than two points or an
    all-coincident set; can still return 0.0 in the contrived case where
    at least half the points sit exactly on the mean center (callers
    should fall back, see :func:`resolve_radius`).
    """
    arr = as_xy(points)
    n = arr.shape[0]
    if n < 2:
        raise DegenerateInputError("default_search_radius needs at least 2 points")
    center = arr.mean(axis=0)
    d = np.hypot(arr[:, 0] - center[0], arr[:, 1] - center[1])
    sd = math.sqrt(float(np.mean(d * d)))
    if sd == 0.0:
        raise DegenerateInputError("all points coincide; search radius undefined")
    dm = float(np.median(d))
    return 0.9 * min(sd, math.sqrt(1.0 / math.log(2.0)) * dm) * n ** (-0.2)


def resolve_radius(points, cell_size: float, override: float | None = None) -> float:
    """Pick the working radius: explicit override, else the data default.

    A degenerate default of 0 falls back to one cell_size with a warning
    rather than producing an empty density surface.
    """
    if override is not None:
        if override <= 0:
            raise ValueError("search radius override must be positive")
        return float(override)
    radius = default_search_radius(points)
    if radius <= 0.0:
        warnings.warn(
            "default search radius degenerated to 0; falling back to one cell size",
            stacklevel=2,
        )
        return float(cell_size)
    return radius


# ---------------------------------------------------------------------------
# Grids and KDE
# ---------------------------------------------------------------------------

def make_grid(bbox: tuple[float, float, float, float], cell_size: float) -> Raster:
    """Zero-filled raster covering a planar bbox (ceil division per axis)."""
    min_x, min_y, max_x, max_y = bbox
    if not (min_x < max_x and min_y < max_y):
        raise ValueError(f"degenerate bbox: {bbox}")
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    n_cols = math.ceil((max_x - min_x) / cell_size)
    n_rows = math.ceil((max_y - min_y) / cell_size)
    return Raster(min_x, min_y, cell_size, n_cols, n_rows,
                  np.zeros((n_rows, n_cols), dtype=np.float64))


def kde(points, grid: Raster, radius: float) -> Raster:
    """Quartic-kernel density on the grid's cell centers.

    Each cell center c accumulates, over points p with d = |c - p| <
    radius, the kernel (3 / (pi * radius^2)) * (1 - (d/radius)^2)^2.
    Cells with no point in range stay exactly 0. Points are folded in
    input order, which fixes the per-cell float64 addition order; see
    the module docstring for the exact expression shapes.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    arr = as_xy(points)
    cs = grid.cell_size
    ox, oy = grid.origin_x, grid.origin_y
    n_cols, n_rows = grid.n_cols, grid.n_rows
    cx = grid.col_centers()
    cy = grid.row_centers()
    r2 = radius * radius
    coef = 3.0 / (math.pi * r2)
    out = np.zeros((n_rows, n_cols), dtype=np.float64)
    for px, py in arr:
        # Window of candidate cells, padded a cell each side; the exact
        # d2 < r2 mask decides membership so over-coverage is harmless.
        j0 = max(0, math.floor((px - radius - ox) / cs) - 1)
        j1 = min(n_cols, math.floor((px + radius - ox) / cs) + 2)
        i0 = max(0, math.floor((py - radius - oy) / cs) - 1)
        i1 = min(n_rows, math.floor((py + radius - oy) / cs) + 2)
        if j0 >= j1 or i0 >= i1:
            continue
        dx = cx[j0:j1] - px
        dy = cy[i0:i1] - py
        d2 = dy[:, None] * dy[:, None] + dx[None, :] * dx[None, :]
        u = 1.0 - d2 / r2
        w = u * u
        out[i0:i1, j0:j1] += np.where(d2 < r2, coef * w, 0.0)
    return grid.with_values(out)


def normalize_diff(raster_a: Raster, raster_b: Raster) -> Raster:
    """Per-cell a/max(a) - b/max(b); the differential surface.

    Inputs are density rasters (non-negative), so the output lies in
    [-1, 1]: positive where a dominates relative to its own peak.
    """
    if not raster_a.same_geometry(raster_b):
        raise GridMismatchError(
            f"grid geometry mismatch: {raster_a.geometry()} vs {raster_b.geometry()}"
        )
    max_a = raster_a.max_value
    max_b = raster_b.max_value
    if max_a <= 0.0 or max_b <= 0.0:
        raise DegenerateInputError(
            "normalize_diff requires both rasters to have a positive maximum"
        )
    values = raster_a.values / max_a - raster_b.values / max_b
    return raster_a.with_values(values)


def seasonal_change(
    keyword_by_season: Mapping[Season, Sequence],
    all_by_season: Mapping[Season, Sequence],
    from_season: Season,
    to_season: Season,
    mode: ChangeMode,
    grid: Raster,
    radius: float,
) -> SeasonalChange:
    """Signed change raster between two consecutive seasons.

    Absolute mode subtracts the keyword KDEs directly. Normalized mode
    subtracts the differential surfaces (keyword vs. everything) so the
    change is relative to overall posting volume. The radius is fixed
    across both seasons (callers pass the Spring default).
    """
    i_from = SEASON_CYCLE.index(from_season)
    if SEASON_CYCLE[(i_from + 1) % len(SEASON_CYCLE)] is not to_season:
        raise ValueError(
            f"{from_season.value} -> {to_season.value} is not a consecutive pair"
        )

    def keyword_points(season: Season) -> np.ndarray:
        if season not in keyword_by_season:
            raise DegenerateInputError(f"missing season: {season.value}")
        pts = as_xy(keyword_by_season[season])
        if pts.shape[0] == 0:
            raise DegenerateInputError(f"no keyword points for {season.value}")
        return pts

    kw_from = keyword_points(from_season)
    kw_to = keyword_points(to_season)

    if mode is ChangeMode.ABSOLUTE:
        values = kde(kw_to, grid, radius).values - kde(kw_from, grid, radius).values
    else:
        def normalized(season: Season, kw: np.ndarray) -> np.ndarray:
            if season not in all_by_season:
                raise DegenerateInputError(f"missing season: {season.value}")
            base = as_xy(all_by_season[season])
            if base.shape[0] == 0:
                raise DegenerateInputError(f"no background points for {season.value}")
            return normalize_diff(kde(kw, grid, radius), kde(base, grid, radius)).values

        values = normalized(to_season, kw_to) - normalized(from_season, kw_from)

    return SeasonalChange(from_season, to_season, mode, grid.with_values(values))


# ---------------------------------------------------------------------------
# Raster file formats
# ---------------------------------------------------------------------------
#
# ASCII: ESRI grid with a fixed NODATA_value of -9999 (never emitted as a
# cell value) and the north row first. Cell values print with 9
# significant digits; header coordinates keep full repr precision.
#
# Binary sidecar: little-endian, magic "PSGR", u16 version=1, u16 pad,
# u32 ncols, u32 nrows, f64 xll, f64 yll, f64 cellsize, then
# nrows*ncols f64 values, north row first (same order as ASCII).

_BIN_MAGIC = b"PSGR"
_BIN_HEADER = struct.Struct("<4sHHIIddd")


def _atomic_write_bytes(path, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_text(path, text: str) -> None:
    """Write UTF-8 text via a temp file and rename; no partial files."""
    _atomic_write_bytes(path, text.encode("utf-8"))


def ascii_grid_text(raster: Raster) -> str:
    lines = [
        f"ncols {raster.n_cols}",
        f"nrows {raster.n_rows}",
        f"xllcorner {raster.origin_x!r}",
        f"yllcorner {raster.origin_y!r}",
        f"cellsize {raster.cell_size!r}",
        "NODATA_value -9999",
    ]
    for row in range(raster.n_rows - 1, -1, -1):
        lines.append(" ".join(f"{v:.9g}" for v in raster.values[row]))
    return "\n".join(lines) + "\n"


def write_ascii_grid(raster: Raster, path) -> None:
    atomic_write_text(path, ascii_grid_text(raster))


def read_ascii_grid(path) -> Raster:
    with open(path, encoding="utf-8") as fh:
        tokens_header: dict[str, float] = {}
        values_lines: list[str] = []
        for line in fh:
            stripped = line.strip()
            if not stripped:
                continue
            parts = stripped.split()
            key = parts[0].lower()
            if len(parts) == 2 and key in (
                "ncols", "nrows", "xllcorner", "yllcorner", "cellsize",
                "nodata_value",
            ):
                tokens_header[key] = float(parts[1])
            else:
                values_lines.append(stripped)
    for required in ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize"):
        if required not in tokens_header:
            raise ValueError(f"ASCII grid header missing {required}")
    n_cols = int(tokens_header["ncols"])
    n_rows = int(tokens_header["nrows"])
    flat = np.array(" ".join(values_lines).split(), dtype=np.float64)
    if flat.size != n_cols * n_rows:
        raise ValueError(
            f"ASCII grid has {flat.size} values, expected {n_cols * n_rows}"
        )
    north_first = flat.reshape(n_rows, n_cols)
    return Raster(
        tokens_header["xllcorner"],
        tokens_header["yllcorner"],
        tokens_header["cellsize"],
        n_cols,
        n_rows,
        north_first[::-1],
    )


def write_binary_grid(raster: Raster, path) -> None:
    header = _BIN_HEADER.pack(
        _BIN_MAGIC, 1, 0, raster.n_cols, raster.n_rows,
        raster.origin_x, raster.origin_y, raster.cell_size,
    )
    body = np.ascontiguousarray(raster.values[::-1], dtype="<f8").tobytes()
    _atomic_write_bytes(path, header + body)


def read_binary_grid(path) -> Raster:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _BIN_HEADER.size:
        raise ValueError("binary grid truncated")
    magic, version, _, n_cols, n_rows, xll, yll, cellsize = _BIN_HEADER.unpack_from(raw)
    if magic != _BIN_MAGIC:
        raise ValueError("not a placescope binary grid")
    if version != 1:
        raise ValueError(f"unsupported binary grid version {version}")
    body = np.frombuffer(raw, dtype="<f8", offset=_BIN_HEADER.size)
    if body.size != n_cols * n_rows:
        raise ValueError("binary grid value count mismatch")
    north_first = body.reshape(n_rows, n_cols)
    return Raster(xll, yll, cellsize, n_cols, n_rows, north_first[::-1].copy())
