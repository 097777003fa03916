"""Shared test fixtures and deterministic hypothesis settings."""

import sys
from datetime import datetime, timezone
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))  # for `import oracles`

settings.register_profile(
    "ci",
    derandomize=True,
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


UTC = timezone.utc


def make_post(post_id="p1", when="2015-06-15T12:00:00", lon=-117.1, lat=32.7,
              text="hello sdsu", source="web", platform=None):
    """A GeoPost literal with keyword defaults, for compact fixtures."""
    from placescope.ingest import GeoPost, Platform

    return GeoPost(
        id=post_id,
        timestamp=datetime.fromisoformat(when).replace(tzinfo=UTC),
        lon=lon,
        lat=lat,
        text=text,
        source=source,
        platform=platform or Platform.OTHER,
    )


@pytest.fixture
def post_factory():
    return make_post
