"""Density and hierarchical clustering plus hull construction.

All label assignments are deterministic: DBSCAN scans points in input
order (so cluster ids follow formation order and border points join the
earliest-formed adjacent cluster), Ward breaks distance ties by the
lowest original point indices, and hull walks are fully ordered.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import DegenerateGeometryError, DegenerateInputError
from .kde import PlanarPoint, as_xy

__all__ = [
    "NOISE",
    "ClusterMethod",
    "ClusterResult",
    "HullKind",
    "Hull",
    "dbscan",
    "dmdbscan_eps_levels",
    "dmdbscan",
    "ward_cluster",
    "largest_cluster",
    "convex_hull",
    "concave_hull",
    "cluster_csv",
]

#: Label for points not assigned to any cluster.
NOISE = -1


class ClusterMethod(Enum):
    DBSCAN = "Dbscan"
    DMDBSCAN = "Dmdbscan"
    WARD = "Ward"


class HullKind(Enum):
    CONVEX = "Convex"
    CONCAVE = "Concave"


@dataclass(frozen=True, eq=False)
class ClusterResult:
    """Per-point labels (cluster id >= 0 or NOISE) plus run parameters."""

    labels: np.ndarray
    k: int
    method: ClusterMethod
    params: dict

    def __post_init__(self):
        arr = np.asarray(self.labels, dtype=np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)


@dataclass(frozen=True, eq=False)
class Hull:
    """A simple closed ring (CCW, not explicitly closed) around points."""

    kind: HullKind
    ring: np.ndarray
    k_used: int | None = None

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.ring, dtype=np.float64))
        arr.setflags(write=False)
        object.__setattr__(self, "ring", arr)


def _squared_distances(arr: np.ndarray) -> np.ndarray:
    diff = arr[:, None, :] - arr[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


# ---------------------------------------------------------------------------
# DBSCAN / DMDBSCAN
# ---------------------------------------------------------------------------

def dbscan(points, eps: float, min_pts: int) -> ClusterResult:
    """Classic density clustering.

    A point is core iff at least min_pts points (itself included) lie
    within eps (closed ball). Clusters are grown from cores in input
    order; a border point therefore lands in the earliest-formed cluster
    among its adjacent cores.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    arr = as_xy(points)
    n = arr.shape[0]
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return ClusterResult(labels, 0, ClusterMethod.DBSCAN,
                             {"eps": float(eps), "min_pts": int(min_pts)})
    neighbors = _squared_distances(arr) <= eps * eps
    core = neighbors.sum(axis=1) >= min_pts
    cluster_id = 0
    for seed in range(n):
        if not core[seed] or labels[seed] != NOISE:
            continue
        labels[seed] = cluster_id
        queue = deque([seed])
        while queue:
            current = queue.popleft()
            for j in np.flatnonzero(neighbors[current]):
                if labels[j] == NOISE:
                    labels[j] = cluster_id
                    if core[j]:
                        queue.append(j)
        cluster_id += 1
    return ClusterResult(labels, cluster_id, ClusterMethod.DBSCAN,
                         {"eps": float(eps), "min_pts": int(min_pts)})


def dmdbscan_eps_levels(points, min_pts: int) -> list[float]:
    """Candidate eps values from knees of the sorted k-distance curve.

    Each point's distance to its min_pts-th nearest other point is
    sorted ascending; knees are indices whose discrete second difference
    exceeds 3x the median absolute second difference. Consecutive
    qualifying indices collapse to the strongest one per run. Falls back
    to the curve median when nothing qualifies, so at least one level
    always comes back.

    The threshold is floored at 1e-12 of the curve maximum: symmetric
    point sets make the median of the second differences collapse to
    rounding noise, and a "knee" below the noise floor would change the
    eps by less than one part in 1e12, which no clustering can see.
    """
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    arr = as_xy(points)
    n = arr.shape[0]
    if n <= min_pts:
        raise DegenerateInputError(
            f"need more than min_pts={min_pts} points, got {n}"
        )
    d = np.sqrt(_squared_distances(arr))
    d_sorted = np.sort(d, axis=1)
    curve = np.sort(d_sorted[:, min_pts])  # column 0 is the point itself
    if curve[-1] <= 0.0:
        raise DegenerateInputError(
            "all points coincide; no density structure to discover"
        )
    if n < 3:
        return [float(np.median(curve))]
    second = curve[2:] - 2.0 * curve[1:-1] + curve[:-2]
    threshold = max(3.0 * float(np.median(np.abs(second))),
                    1e-12 * float(curve[-1]))
    qualifying = np.flatnonzero(second > threshold)
    if qualifying.size == 0:
        return [float(np.median(curve))]
    levels = []
    run_start = 0
    for idx in range(1, qualifying.size + 1):
        if idx == qualifying.size or qualifying[idx] != qualifying[idx - 1] + 1:
            run = qualifying[run_start:idx]
            best = run[int(np.argmax(second[run]))]
            levels.append(float(curve[best + 1]))
            run_start = idx
    return sorted(set(levels))


def dmdbscan(points, min_pts: int) -> ClusterResult:
    """DBSCAN at each discovered eps level, ascending, on leftover points.

    Points clustered at a small eps are excluded from later (larger)
    levels; whatever remains after the last level is noise.
    """
    arr = as_xy(points)
    if arr.shape[0] == 0:
        raise DegenerateInputError("dmdbscan requires a non-empty point set")
    levels = dmdbscan_eps_levels(arr, min_pts)
    labels = np.full(arr.shape[0], NOISE, dtype=np.int64)
    next_id = 0
    for eps in levels:
        unlabeled = np.flatnonzero(labels == NOISE)
        if unlabeled.size == 0:
            break
        sub = dbscan(arr[unlabeled], eps, min_pts)
        for local_id in range(sub.k):
            labels[unlabeled[sub.labels == local_id]] = next_id
            next_id += 1
    return ClusterResult(labels, next_id, ClusterMethod.DMDBSCAN,
                         {"eps_levels": levels, "min_pts": int(min_pts)})


# ---------------------------------------------------------------------------
# Ward hierarchical clustering
# ---------------------------------------------------------------------------

def ward_cluster(points, k: int) -> ClusterResult:
    """Agglomerate by Ward's minimum-variance rule down to k clusters.

    Uses the Lance-Williams update on squared Euclidean distances. Merge
    ties are broken by the smallest (lowest, other) pair of original
    point indices; final cluster ids are ordered by each cluster's
    lowest original point index.
    """
    arr = as_xy(points)
    n = arr.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    dist = _squared_distances(arr).astype(np.float64)
    active = list(range(n))
    size = [1] * n
    rep = list(range(n))  # lowest original index in each cluster
    members: list[list[int]] = [[i] for i in range(n)]
    while len(active) > k:
        best = None
        for a_pos in range(len(active)):
            for b_pos in range(a_pos + 1, len(active)):
                a, b = active[a_pos], active[b_pos]
                candidate = (
                    dist[a, b],
                    min(rep[a], rep[b]),
                    max(rep[a], rep[b]),
                )
                if best is None or candidate < best[0]:
                    best = (candidate, a, b)
        _, a, b = best
        # Lance-Williams (Ward): d(c, a+b) for every other cluster c.
        n_a, n_b = size[a], size[b]
        for c in active:
            if c == a or c == b:
                continue
            n_c = size[c]
            total = n_a + n_b + n_c
            merged = (
                (n_a + n_c) * dist[a, c]
                + (n_b + n_c) * dist[b, c]
                - n_c * dist[a, b]
            ) / total
            dist[a, c] = merged
            dist[c, a] = merged
        size[a] = n_a + n_b
        rep[a] = min(rep[a], rep[b])
        members[a].extend(members[b])
        active.remove(b)
    order = sorted(active, key=lambda c: rep[c])
    labels = np.full(n, NOISE, dtype=np.int64)
    for cluster_id, c in enumerate(order):
        labels[members[c]] = cluster_id
    return ClusterResult(labels, k, ClusterMethod.WARD, {"k": int(k)})


def largest_cluster(result: ClusterResult, points) -> list[PlanarPoint]:
    """Points of the biggest cluster; size ties go to the lowest id."""
    if result.k == 0:
        raise DegenerateInputError("no clusters: every point is noise")
    arr = as_xy(points)
    sizes = np.bincount(result.labels[result.labels >= 0], minlength=result.k)
    best = int(np.argmax(sizes))  # argmax returns the first (lowest) id on ties
    return [PlanarPoint(float(x), float(y))
            for x, y in arr[result.labels == best]]


# ---------------------------------------------------------------------------
# Hulls
# ---------------------------------------------------------------------------

def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> Hull:
    """Monotone-chain convex hull, CCW, collinear vertices dropped."""
    arr = np.unique(as_xy(points), axis=0)
    if arr.shape[0] < 3:
        raise DegenerateGeometryError("convex hull needs >= 3 distinct points")
    pts = [tuple(p) for p in arr]  # np.unique sorts lexicographically
    lower: list[tuple[float, float]] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    ring = lower[:-1] + upper[:-1]
    if len(ring) < 3:
        raise DegenerateGeometryError("all points are collinear")
    return Hull(HullKind.CONVEX, np.asarray(ring, dtype=np.float64))


def _boxed(ux, uy, vx, vy, cx, cy):
    """Point (cx, cy) within the axis-aligned box of (u, v), elementwise."""
    return (
        (np.minimum(ux, vx) <= cx) & (cx <= np.maximum(ux, vx))
        & (np.minimum(uy, vy) <= cy) & (cy <= np.maximum(uy, vy))
    )


def _segment_hits_edges(a, b, q1: np.ndarray, q2: np.ndarray) -> bool:
    """Whether segment a-b crosses (or collinearly overlaps) any edge.

    Edges are given as parallel arrays of endpoints; callers exclude the
    edges that legitimately share an endpoint with a-b.
    """
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    q1x, q1y = q1[:, 0], q1[:, 1]
    q2x, q2y = q2[:, 0], q2[:, 1]
    d1 = (q2x - q1x) * (ay - q1y) - (q2y - q1y) * (ax - q1x)
    d2 = (q2x - q1x) * (by - q1y) - (q2y - q1y) * (bx - q1x)
    d3 = (bx - ax) * (q1y - ay) - (by - ay) * (q1x - ax)
    d4 = (bx - ax) * (q2y - ay) - (by - ay) * (q2x - ax)
    hit = ((d1 > 0) != (d2 > 0)) & ((d3 > 0) != (d4 > 0))
    # Collinear overlap counts as an intersection for ring simplicity.
    hit |= (d1 == 0) & _boxed(q1x, q1y, q2x, q2y, ax, ay)
    hit |= (d2 == 0) & _boxed(q1x, q1y, q2x, q2y, bx, by)
    hit |= (d3 == 0) & _boxed(ax, ay, bx, by, q1x, q1y)
    hit |= (d4 == 0) & _boxed(ax, ay, bx, by, q2x, q2y)
    return bool(np.any(hit))


def _ring_contains_all(ring: list[tuple[float, float]], arr: np.ndarray) -> bool:
    # Local even-odd + on-edge test (boundary counts as contained).
    x = arr[:, 0]
    y = arr[:, 1]
    inside = np.zeros(len(arr), dtype=bool)
    on_edge = np.zeros(len(arr), dtype=bool)
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
    return bool(np.all(inside | on_edge))


def _concave_attempt(pts: np.ndarray, k: int) -> list[tuple[float, float]] | None:
    """One k-nearest-neighbor boundary walk; None when it dead-ends."""
    n = pts.shape[0]
    start = int(np.lexsort((pts[:, 0], pts[:, 1]))[0])  # min y, then min x
    chain = [start]
    used = np.zeros(n, dtype=bool)
    used[start] = True
    heading = 0.0  # as if arriving eastbound along the bottom of the set
    current = start
    max_steps = 4 * n + 8
    for _ in range(max_steps):
        diff = pts - pts[current]
        d2 = diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1]
        cand_d2 = np.where(used, np.inf, d2)
        if len(chain) >= 3:
            cand_d2[start] = d2[start]  # closing the ring becomes an option
        n_avail = int(np.isfinite(cand_d2).sum())
        if n_avail == 0:
            return None
        kk = min(k, n_avail)
        if kk < n_avail:
            kth = np.partition(cand_d2, kk - 1)[kk - 1]
            pool = np.flatnonzero(cand_d2 <= kth)
        else:
            pool = np.flatnonzero(np.isfinite(cand_d2))
        # Ties at the cutoff resolve by lowest index, the reopened start
        # point last; then truncate to the k nearest.
        order = np.lexsort((pool, pool == start, cand_d2[pool]))
        nearest = pool[order][:kk]
        # Wall-hugging pick: sweep clockwise from the reversed incoming
        # direction and take the first candidate; an exact double-back
        # ranks last. This keeps the walked boundary on the right, so
        # the wrap follows notches instead of bridging them.
        vecs = pts[nearest] - pts[current]
        angles = np.arctan2(vecs[:, 1], vecs[:, 0])
        turns = (heading + math.pi - angles) % (2.0 * math.pi)
        turns = np.where(turns == 0.0, 2.0 * math.pi, turns)
        scored = sorted(
            (float(turns[m]), float(d2[idx]), int(idx))
            for m, idx in enumerate(nearest)
        )
        chain_pts = pts[np.asarray(chain, dtype=np.intp)]
        chosen = None
        for _, _, idx in scored:
            # Skip edges sharing an endpoint with the new segment: the
            # one into `current`, and the first one when closing.
            first = 1 if idx == start else 0
            q1 = chain_pts[first:len(chain) - 2]
            q2 = chain_pts[first + 1:len(chain) - 1]
            if q1.shape[0] and _segment_hits_edges(pts[current], pts[idx],
                                                   q1, q2):
                continue
            chosen = idx
            break
        if chosen is None:
            return None
        if chosen == start:
            return [tuple(pts[i]) for i in chain]
        vec = pts[chosen] - pts[current]
        heading = math.atan2(vec[1], vec[0])
        used[chosen] = True
        chain.append(chosen)
        current = chosen
    return None


def concave_hull(points, k0: int = 3) -> Hull:
    """k-nearest-neighbor boundary wrap, growing k until valid.

    Starts at k = max(3, k0); a candidate ring is accepted when it is
    simple and contains every input point. Failed attempts grow k by
    half (dense interior-heavy sets reject hundreds of small k values,
    so a unit step is hopeless at corpus scale). If no k < n succeeds
    the convex hull ring is returned with k_used = n, which still
    satisfies the containment contract (and area equal to the convex
    hull's).
    """
    if k0 < 3:
        raise ValueError("k0 must be >= 3")
    arr = np.unique(as_xy(points), axis=0)
    convex = convex_hull(arr)  # also rejects degenerate input
    n = arr.shape[0]
    if n == 3:
        return Hull(HullKind.CONCAVE, convex.ring, k_used=3)
    k = min(max(3, k0), n - 1)
    while True:
        ring = _concave_attempt(arr, k)
        if (ring is not None and len(ring) >= 3
                and _ring_contains_all(ring, arr)):
            if _signed_ring_area(ring) < 0.0:
                ring.reverse()
            return Hull(HullKind.CONCAVE, np.asarray(ring, dtype=np.float64),
                        k_used=k)
        if k >= n - 1:
            return Hull(HullKind.CONCAVE, convex.ring, k_used=n)
        k = min(n - 1, k + max(1, k // 2))


def _signed_ring_area(ring) -> float:
    total = 0.0
    n = len(ring)
    for i in range(n):
        x1, y1 = ring[i]
        x2, y2 = ring[(i + 1) % n]
        total += x1 * y2 - x2 * y1
    return 0.5 * total


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def cluster_csv(result: ClusterResult, points) -> str:
    """CSV dump: point_index,x,y,label (noise stays -1)."""
    arr = as_xy(points)
    if arr.shape[0] != result.labels.shape[0]:
        raise ValueError("points and labels length mismatch")
    lines = ["point_index,x,y,label"]
    for i, ((x, y), label) in enumerate(zip(arr, result.labels)):
        lines.append(f"{i},{float(x)!r},{float(y)!r},{int(label)}")
    return "\n".join(lines) + "\n"
