"""Shared geometry builders for the test suite."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from tagmap.geo import GeoPoint, RegionPolygon, local_degree_steps


def rect_region(
    region_id: str,
    center: GeoPoint,
    width_m: float,
    height_m: float,
    holes: tuple = (),
) -> RegionPolygon:
    """Axis-aligned rectangle of the given metric size centered on a point."""
    dlat, dlon = local_degree_steps(center, 1.0)  # degrees per meter
    half_lat = dlat * height_m / 2.0
    half_lon = dlon * width_m / 2.0
    lat0, lat1 = center.lat_deg - half_lat, center.lat_deg + half_lat
    lon0, lon1 = center.lon_deg - half_lon, center.lon_deg + half_lon
    return RegionPolygon(
        region_id=region_id,
        exterior=(
            GeoPoint(lat0, lon0),
            GeoPoint(lat0, lon1),
            GeoPoint(lat1, lon1),
            GeoPoint(lat1, lon0),
        ),
        holes=holes,
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and item.fspath.basename == "test_acceptance.py":
        status = "PASS" if report.passed else "FAIL"
        criterion = getattr(item.function, "criterion", item.name)
        print(f"\nACCEPTANCE {status}: {criterion}")


def write_region_geojson(path: str | Path, *regions: RegionPolygon) -> Path:
    def ring_coords(ring):
        return [[p.lon_deg, p.lat_deg] for p in ring]

    features = [
        {
            "type": "Feature",
            "properties": {"region_id": region.region_id},
            "geometry": {
                "type": "Polygon",
                "coordinates": [ring_coords(region.exterior)]
                + [ring_coords(h) for h in region.holes],
            },
        }
        for region in regions
    ]
    path = Path(path)
    path.write_text(json.dumps({"type": "FeatureCollection", "features": features}))
    return path


@pytest.fixture
def equator_square_km() -> RegionPolygon:
    return rect_region("sq1km", GeoPoint(0.0, 0.0), 1000.0, 1000.0)
