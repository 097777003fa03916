"""Parse, validate, filter, and slice geo-tagged post corpora.

Corpora are UTF-8 line-delimited JSON, one object per line:

    {"id": "...", "created_at": "2015-03-01T12:00:00Z", "lon": -117.07,
     "lat": 32.77, "text": "...", "source": "...", "platform": "Twitter"}

``platform`` is optional and defaults to ``Other``. Timestamps are
ISO-8601; naive timestamps are taken as UTC.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .errors import ParseError

__all__ = [
    "Platform",
    "Season",
    "SEASON_CYCLE",
    "GeoPost",
    "PlaceQuery",
    "BoundingBox",
    "NoiseReport",
    "parse_posts",
    "read_posts",
    "write_posts",
    "post_to_json",
    "filter_noise",
    "make_noise_report",
    "query_keyword",
    "assign_season",
    "season_start_year",
    "slice_by_month",
    "slice_by_season",
]


class Platform(Enum):
    TWITTER = "Twitter"
    WEIBO = "Weibo"
    OTHER = "Other"


class Season(Enum):
    SPRING = "Spring"
    SUMMER = "Summer"
    FALL = "Fall"
    WINTER = "Winter"


#: Consecutive order used for seasonal differencing; the cycle wraps
#: (Winter is followed by the next Spring).
SEASON_CYCLE: tuple[Season, ...] = (
    Season.SPRING,
    Season.SUMMER,
    Season.FALL,
    Season.WINTER,
)

_SEASON_BY_MONTH = {
    3: Season.SPRING, 4: Season.SPRING, 5: Season.SPRING,
    6: Season.SUMMER, 7: Season.SUMMER, 8: Season.SUMMER,
    9: Season.FALL, 10: Season.FALL, 11: Season.FALL,
    12: Season.WINTER, 1: Season.WINTER, 2: Season.WINTER,
}

#: Reason keys of a NoiseReport, in reporting order.
NOISE_REASONS = ("OutsideBbox", "BlockedSource", "Malformed", "Duplicate")


@dataclass(frozen=True)
class GeoPost:
    """One geo-tagged microblog record."""

    id: str
    timestamp: datetime  # timezone-aware, UTC
    lon: float
    lat: float
    text: str
    source: str
    platform: Platform = Platform.OTHER


@dataclass(frozen=True)
class BoundingBox:
    """A lon/lat rectangle (degrees WGS84)."""

    min_lon: float
    min_lat: float
    max_lon: float
    max_lat: float

    def __post_init__(self):
        if not (self.min_lon < self.max_lon and self.min_lat < self.max_lat):
            raise ValueError(
                f"degenerate bounding box: "
                f"({self.min_lon}, {self.min_lat}, {self.max_lon}, {self.max_lat})"
            )

    def contains(self, lon: float, lat: float) -> bool:
        return (self.min_lon <= lon <= self.max_lon
                and self.min_lat <= lat <= self.max_lat)

    def center(self) -> tuple[float, float]:
        return ((self.min_lon + self.max_lon) / 2.0,
                (self.min_lat + self.max_lat) / 2.0)


@dataclass(frozen=True)
class PlaceQuery:
    """A place name plus spelling variants, matched case-insensitively."""

    canonical_name: str
    aliases: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.canonical_name:
            raise ValueError("canonical_name must be non-empty")
        seen = {self.canonical_name.casefold()}
        deduped = []
        for alias in self.aliases:
            folded = alias.casefold()
            if folded and folded not in seen:
                seen.add(folded)
                deduped.append(alias)
        object.__setattr__(self, "aliases", tuple(deduped))

    def match_terms(self) -> tuple[str, ...]:
        """Case-folded phrases that count as a mention of this place."""
        return (self.canonical_name.casefold(),
                *(a.casefold() for a in self.aliases))


@dataclass(frozen=True)
class NoiseReport:
    """Counts removed by :func:`filter_noise`, per removal reason."""

    original_count: int
    noise_count: int
    final_count: int
    noise_percentage: float
    reasons: Mapping[str, int]

    def to_dict(self) -> dict:
        """Flat JSON-ready form: counts plus one key per reason."""
        out: dict = {
            "original_count": self.original_count,
            "noise_count": self.noise_count,
            "final_count": self.final_count,
            "noise_percentage": self.noise_percentage,
        }
        for reason in NOISE_REASONS:
            out[reason] = self.reasons.get(reason, 0)
        return out


def make_noise_report(original_count: int, reasons: Mapping[str, int]) -> NoiseReport:
    """Build a NoiseReport from an original count and per-reason removals.

    The percentage is truncated (not rounded) at the second decimal so a
    reported figure never overstates the noise share.
    """
    if original_count < 0:
        raise ValueError("original_count must be non-negative")
    unknown = set(reasons) - set(NOISE_REASONS)
    if unknown:
        raise ValueError(f"unknown noise reasons: {sorted(unknown)}")
    if any(v < 0 for v in reasons.values()):
        raise ValueError("reason counts must be non-negative")
    noise = sum(reasons.values())
    if noise > original_count:
        raise ValueError("noise_count exceeds original_count")
    if original_count == 0:
        pct = 0.0
    else:
        pct = math.floor(100.0 * noise / original_count * 100.0) / 100.0
    return NoiseReport(
        original_count=original_count,
        noise_count=noise,
        final_count=original_count - noise,
        noise_percentage=pct,
        reasons={r: reasons.get(r, 0) for r in NOISE_REASONS},
    )


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_REQUIRED_KEYS = ("id", "created_at", "lon", "lat", "text", "source")


def _parse_timestamp(raw: str) -> datetime:
    # datetime.fromisoformat on Python 3.10 rejects a trailing 'Z'.
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    ts = datetime.fromisoformat(raw)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _post_from_obj(obj: dict) -> GeoPost:
    """Validate one decoded record; raises ValueError naming the field."""
    if not isinstance(obj, dict):
        raise ValueError("record: not a JSON object")
    for key in _REQUIRED_KEYS:
        if key not in obj:
            raise ValueError(f"{key}: missing")
    post_id = obj["id"]
    if not isinstance(post_id, str) or not post_id:
        raise ValueError("id: must be a non-empty string")
    raw_ts = obj["created_at"]
    if not isinstance(raw_ts, str):
        raise ValueError("created_at: must be a string")
    try:
        ts = _parse_timestamp(raw_ts)
    except ValueError as exc:
        raise ValueError(f"created_at: {exc}") from None
    lon = obj["lon"]
    lat = obj["lat"]
    if not isinstance(lon, (int, float)) or isinstance(lon, bool) or not math.isfinite(lon):
        raise ValueError("lon: must be a finite number")
    if not isinstance(lat, (int, float)) or isinstance(lat, bool) or not math.isfinite(lat):
        raise ValueError("lat: must be a finite number")
    if not -180.0 <= lon <= 180.0:
        raise ValueError(f"lon: {lon} out of range [-180, 180]")
    if not -90.0 <= lat <= 90.0:
        raise ValueError(f"lat: {lat} out of range [-90, 90]")
    text = obj["text"]
    if not isinstance(text, str):
        raise ValueError("text: must be a string")
    source = obj["source"]
    if not isinstance(source, str):
        raise ValueError("source: must be a string")
    raw_platform = obj.get("platform", "Other")
    try:
        platform = Platform(raw_platform)
    except ValueError:
        platform = Platform.OTHER
    return GeoPost(
        id=post_id,
        timestamp=ts,
        lon=float(lon),
        lat=float(lat),
        text=text,
        source=source,
        platform=platform,
    )


def parse_posts(lines: Iterable[str], strict: bool = False) -> tuple[list[GeoPost], int]:
    """Parse line-delimited JSON records into posts.

    Returns ``(posts, malformed_count)``. Valid records come back in
    input order. Blank lines are ignored. In strict mode the first bad
    line raises :class:`ParseError` with its line number and field;
    otherwise bad lines are only counted.
    """
    posts: list[GeoPost] = []
    malformed = 0
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            if strict:
                raise ParseError(lineno, "json", str(exc)) from None
            malformed += 1
            continue
        try:
            posts.append(_post_from_obj(obj))
        except ValueError as exc:
            if strict:
                field_name, _, message = str(exc).partition(": ")
                raise ParseError(lineno, field_name, message or str(exc)) from None
            malformed += 1
    return posts, malformed


def read_posts(path, strict: bool = False) -> tuple[list[GeoPost], int]:
    """parse_posts over a file path."""
    with open(path, encoding="utf-8") as fh:
        return parse_posts(fh, strict=strict)


def post_to_json(post: GeoPost) -> str:
    """One post as a single JSON line (the package's input format)."""
    return json.dumps(
        {
            "id": post.id,
            "created_at": post.timestamp.strftime("%Y-%m-%dT%H:%M:%SZ"),
            "lon": post.lon,
            "lat": post.lat,
            "text": post.text,
            "source": post.source,
            "platform": post.platform.value,
        },
        ensure_ascii=False,
    )


def write_posts(path, posts: Sequence[GeoPost]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for post in posts:
            fh.write(post_to_json(post))
            fh.write("\n")


# ---------------------------------------------------------------------------
# Filtering and slicing
# ---------------------------------------------------------------------------

def filter_noise(
    posts: Sequence[GeoPost],
    bbox: BoundingBox,
    blocked_sources: Iterable[str] = (),
    malformed_count: int = 0,
) -> tuple[list[GeoPost], NoiseReport]:
    """Drop out-of-bbox, blocked-source, and duplicate-id posts.

    ``malformed_count`` folds parse-stage rejects into the report so the
    noise arithmetic covers the whole raw input. Per post, the first
    matching reason wins, checked as OutsideBbox, then BlockedSource,
    then Duplicate. A duplicate is any id already seen earlier in the
    input, whether or not that earlier post was kept.
    """
    if malformed_count < 0:
        raise ValueError("malformed_count must be non-negative")
    blocked = set(blocked_sources)
    reasons = {r: 0 for r in NOISE_REASONS}
    reasons["Malformed"] = malformed_count
    seen_ids: set[str] = set()
    kept: list[GeoPost] = []
    for post in posts:
        duplicate = post.id in seen_ids
        seen_ids.add(post.id)
        if not bbox.contains(post.lon, post.lat):
            reasons["OutsideBbox"] += 1
        elif post.source in blocked:
            reasons["BlockedSource"] += 1
        elif duplicate:
            reasons["Duplicate"] += 1
        else:
            kept.append(post)
    report = make_noise_report(len(posts) + malformed_count, reasons)
    return kept, report


def query_keyword(posts: Sequence[GeoPost], query: PlaceQuery) -> list[GeoPost]:
    """Posts whose text mentions the place (case-insensitive substring)."""
    terms = query.match_terms()
    return [p for p in posts if any(t in p.text.casefold() for t in terms)]


def assign_season(timestamp: datetime) -> Season:
    """Season by month: Mar-May, Jun-Aug, Sep-Nov, Dec-Feb."""
    return _SEASON_BY_MONTH[timestamp.month]


def season_start_year(timestamp: datetime) -> int:
    """Year the timestamp's season started in (Feb 2016 -> Winter 2015)."""
    if timestamp.month in (1, 2):
        return timestamp.year - 1
    return timestamp.year


def slice_by_month(posts: Sequence[GeoPost]) -> dict[tuple[int, int], list[GeoPost]]:
    """Partition posts by (year, month)."""
    slices: dict[tuple[int, int], list[GeoPost]] = {}
    for post in posts:
        key = (post.timestamp.year, post.timestamp.month)
        slices.setdefault(key, []).append(post)
    return slices


def slice_by_season(posts: Sequence[GeoPost]) -> dict[Season, list[GeoPost]]:
    """Partition posts by season, aggregating across years."""
    slices: dict[Season, list[GeoPost]] = {s: [] for s in SEASON_CYCLE}
    for post in posts:
        slices[assign_season(post.timestamp)].append(post)
    return slices
