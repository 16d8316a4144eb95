"""Geodetic primitives: points, region polygons, distances, meter/degree steps.

All geometry lives on a mean sphere (R = 6,371,000 m) in plain lat/lon
degrees; at the ~100 m scales this pipeline works with, the sphere error
(<0.6%) is irrelevant. Longitudes are normalized to [-180, 180) and regions
crossing the antimeridian are rejected.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from tagmap.errors import AntimeridianError, PoleProximityError

EARTH_RADIUS_M = 6_371_000.0

# Meters per degree of latitude on the mean sphere (also per degree of
# longitude at the equator).
METERS_PER_DEGREE = math.pi * EARTH_RADIUS_M / 180.0

# Boundary band, in degrees, inside which a point counts as "on" an edge.
# Matches the inclusive-boundary epsilon used by the grid builder so lattice
# rows that land on a region edge are kept deterministically.
_EDGE_EPS_DEG = 1e-9


@dataclass(frozen=True, order=True)
class GeoPoint:
    """A WGS84-style geodetic coordinate in degrees."""

    lat_deg: float
    lon_deg: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat_deg) and math.isfinite(self.lon_deg)):
            raise ValueError("coordinates must be finite")
        if not -90.0 <= self.lat_deg <= 90.0:
            raise ValueError(f"latitude {self.lat_deg} outside [-90, 90]")
        if not -180.0 <= self.lon_deg <= 180.0:
            raise ValueError(f"longitude {self.lon_deg} outside [-180, 180]")
        if self.lon_deg == 180.0:  # normalize to [-180, 180)
            object.__setattr__(self, "lon_deg", -180.0)


@dataclass(frozen=True)
class BoundingBox:
    min_lat: float
    max_lat: float
    min_lon: float
    max_lon: float

    def __post_init__(self) -> None:
        if self.min_lat > self.max_lat or self.min_lon > self.max_lon:
            raise ValueError("bounding box min exceeds max")

    @property
    def mid_lat(self) -> float:
        return 0.5 * (self.min_lat + self.max_lat)

    def contains(self, p: GeoPoint) -> bool:
        return (
            self.min_lat <= p.lat_deg <= self.max_lat
            and self.min_lon <= p.lon_deg <= self.max_lon
        )


Ring = tuple[GeoPoint, ...]


def _close_ring(points: list[GeoPoint] | tuple[GeoPoint, ...]) -> Ring:
    """Normalize a ring so its first point is repeated at the end."""
    pts = list(points)
    if len(pts) >= 2 and pts[0] == pts[-1]:
        pts = pts[:-1]
    if len(pts) < 3:
        raise ValueError("ring needs at least 3 distinct vertices")
    return tuple(pts + [pts[0]])


def _ring_shoelace(ring: Ring) -> float:
    """Signed shoelace sum of a closed ring in the lon/lat plane."""
    acc = 0.0
    for a, b in zip(ring[:-1], ring[1:]):
        acc += a.lon_deg * b.lat_deg - b.lon_deg * a.lat_deg
    return 0.5 * acc


def _segments_properly_intersect(
    a1: GeoPoint, a2: GeoPoint, b1: GeoPoint, b2: GeoPoint
) -> bool:
    # Proper crossing only; shared endpoints and collinear touches pass.
    def orient(p: GeoPoint, q: GeoPoint, r: GeoPoint) -> float:
        return (q.lon_deg - p.lon_deg) * (r.lat_deg - p.lat_deg) - (
            q.lat_deg - p.lat_deg
        ) * (r.lon_deg - p.lon_deg)

    d1 = orient(a1, a2, b1)
    d2 = orient(a1, a2, b2)
    d3 = orient(b1, b2, a1)
    d4 = orient(b1, b2, a2)
    return d1 * d2 < 0 and d3 * d4 < 0


@dataclass(frozen=True)
class RegionPolygon:
    """A survey region: one exterior ring plus optional interior holes."""

    region_id: str
    exterior: Ring
    holes: tuple[Ring, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "exterior", _close_ring(self.exterior))
        object.__setattr__(
            self, "holes", tuple(_close_ring(h) for h in self.holes)
        )
        if abs(_ring_shoelace(self.exterior)) == 0.0:
            raise ValueError(f"region {self.region_id!r} has zero area")
        self._check_antimeridian()
        self._check_simple()

    def _check_antimeridian(self) -> None:
        lons = [p.lon_deg for p in self.exterior]
        if max(lons) - min(lons) > 180.0:
            raise AntimeridianError(
                f"region {self.region_id!r} spans more than 180 degrees of "
                "longitude; antimeridian-crossing regions are unsupported"
            )

    def _check_simple(self) -> None:
        edges = list(zip(self.exterior[:-1], self.exterior[1:]))
        n = len(edges)
        for i in range(n):
            for j in range(i + 2, n):
                if i == 0 and j == n - 1:
                    continue  # adjacent around the wrap
                if _segments_properly_intersect(*edges[i], *edges[j]):
                    raise ValueError(
                        f"region {self.region_id!r} exterior is self-intersecting"
                    )

    @property
    def bbox(self) -> BoundingBox:
        lats = [p.lat_deg for p in self.exterior]
        lons = [p.lon_deg for p in self.exterior]
        return BoundingBox(min(lats), max(lats), min(lons), max(lons))


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters between two points on the mean sphere."""
    phi1 = math.radians(a.lat_deg)
    phi2 = math.radians(b.lat_deg)
    dphi = math.radians(b.lat_deg - a.lat_deg)
    dlmb = math.radians(b.lon_deg - a.lon_deg)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.atan2(math.sqrt(h), math.sqrt(1.0 - h))


def local_degree_steps(at: GeoPoint, spacing_m: float) -> tuple[float, float]:
    """Degree steps that span ``spacing_m`` meters north and east of ``at``.

    Local equirectangular approximation: dlat is constant on the sphere,
    dlon grows with 1/cos(lat). Degenerates near the poles, so latitudes at
    or above 89 degrees are rejected.
    """
    if spacing_m <= 0:
        raise ValueError("spacing_m must be positive")
    if abs(at.lat_deg) >= 89.0:
        raise PoleProximityError(
            f"latitude {at.lat_deg} too close to a pole for a local grid"
        )
    dlat = spacing_m / METERS_PER_DEGREE
    dlon = dlat / math.cos(math.radians(at.lat_deg))
    return dlat, dlon


def _on_segment(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> bool:
    px, py = p.lon_deg, p.lat_deg
    ax, ay = a.lon_deg, a.lat_deg
    bx, by = b.lon_deg, b.lat_deg
    cross = (by - ay) * (px - ax) - (bx - ax) * (py - ay)
    seg_len = math.hypot(bx - ax, by - ay)
    if seg_len == 0.0:
        return math.hypot(px - ax, py - ay) <= _EDGE_EPS_DEG
    if abs(cross) > _EDGE_EPS_DEG * seg_len:
        return False
    dot = (px - ax) * (bx - ax) + (py - ay) * (by - ay)
    return -_EDGE_EPS_DEG * seg_len <= dot <= seg_len * seg_len + _EDGE_EPS_DEG * seg_len


def _ray_crossings(p: GeoPoint, ring: Ring) -> int:
    """Count crossings of an eastward ray from p with the ring's edges."""
    count = 0
    for a, b in zip(ring[:-1], ring[1:]):
        ay, by = a.lat_deg, b.lat_deg
        if (ay > p.lat_deg) == (by > p.lat_deg):
            continue  # edge does not straddle the ray's latitude
        x_at = a.lon_deg + (p.lat_deg - ay) * (b.lon_deg - a.lon_deg) / (by - ay)
        if p.lon_deg < x_at:
            count += 1
    return count


def point_in_polygon(p: GeoPoint, poly: RegionPolygon) -> bool:
    """Even-odd containment test in the lat/lon plane; boundaries count as inside."""
    rings = (poly.exterior,) + poly.holes
    for ring in rings:
        for a, b in zip(ring[:-1], ring[1:]):
            if _on_segment(p, a, b):
                return True
    crossings = sum(_ray_crossings(p, ring) for ring in rings)
    return crossings % 2 == 1


# ---- GeoJSON loading --------------------------------------------------------


def _ring_from_coords(coords: list) -> list[GeoPoint]:
    # GeoJSON positions are [lon, lat].
    return [GeoPoint(lat_deg=float(c[1]), lon_deg=float(c[0])) for c in coords]


def _region_from_polygon(region_id: str, coordinates: list) -> RegionPolygon:
    exterior = _ring_from_coords(coordinates[0])
    holes = tuple(tuple(_ring_from_coords(r)) for r in coordinates[1:])
    return RegionPolygon(region_id=region_id, exterior=tuple(exterior), holes=holes)


def _feature_region_id(feature: dict, index: int) -> str:
    props = feature.get("properties") or {}
    for key in ("region_id", "name"):
        if props.get(key) is not None:
            return str(props[key])
    if feature.get("id") is not None:
        return str(feature["id"])
    return f"region-{index}"


def load_regions(path: str | Path) -> list[RegionPolygon]:
    """Load RegionPolygons from a GeoJSON file.

    Accepts a FeatureCollection, a single Feature, or a bare Polygon /
    MultiPolygon geometry. MultiPolygon parts become separate regions with a
    ``#<part>`` suffix when there is more than one part.
    """
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("type") == "FeatureCollection":
        features = doc["features"]
    elif doc.get("type") == "Feature":
        features = [doc]
    else:
        features = [{"type": "Feature", "properties": {}, "geometry": doc}]

    regions: list[RegionPolygon] = []
    for idx, feature in enumerate(features):
        geom = feature.get("geometry") or {}
        gtype = geom.get("type")
        rid = _feature_region_id(feature, idx)
        if gtype == "Polygon":
            regions.append(_region_from_polygon(rid, geom["coordinates"]))
        elif gtype == "MultiPolygon":
            parts = geom["coordinates"]
            for pi, part in enumerate(parts):
                part_id = rid if len(parts) == 1 else f"{rid}#{pi}"
                regions.append(_region_from_polygon(part_id, part))
        else:
            raise ValueError(f"unsupported GeoJSON geometry type: {gtype!r}")
    if not regions:
        raise ValueError(f"no polygon features found in {path}")
    return regions
