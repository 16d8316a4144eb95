"""Survey-location sampling: systematic lattice, uniform random, coverage filter.

The systematic strategy lays a fixed-step lattice over the region's bounding
box (step sizes frozen at the box's mid-latitude, default spacing 102 m) and
keeps the points that fall inside the region. The random strategy rejection-
samples the bounding box. Both produce a deterministic, (lat, lon)-sorted
SamplePlan.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

from tagmap.errors import EmptyRegionError, RejectionOverflowError
from tagmap.geo import GeoPoint, RegionPolygon, local_degree_steps, point_in_polygon

if TYPE_CHECKING:  # avoid a runtime cycle; acquisition imports sampling
    from tagmap.acquisition import Manifest

DEFAULT_SPACING_M = 102.0

# Lattice coordinates within this many degrees of the bounding box edge are
# still generated, so rows/columns are never lost to float round-off.
_BOUNDARY_EPS_DEG = 1e-9

# Rejection-sampling budget multiplier before declaring the region degenerate.
_MAX_REJECTIONS_PER_POINT = 10_000


@dataclass(frozen=True)
class GridSpec:
    """How to choose survey locations over a region."""

    spacing_m: float = DEFAULT_SPACING_M
    anchor: GeoPoint | None = None  # None = bounding-box min corner
    strategy: str = "systematic"
    n_random: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.strategy not in ("systematic", "random"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.spacing_m <= 0:
            raise ValueError("spacing_m must be positive")
        if self.n_random < 0:
            raise ValueError("n_random must be >= 0")


def point_id_for(location: GeoPoint) -> str:
    """Stable id from the location rounded to 1e-7 degrees (~1 cm)."""
    return f"{round(location.lat_deg * 1e7)}_{round(location.lon_deg * 1e7)}"


@dataclass(frozen=True)
class SamplePoint:
    point_id: str
    location: GeoPoint

    @classmethod
    def at(cls, location: GeoPoint) -> "SamplePoint":
        return cls(point_id=point_id_for(location), location=location)


@dataclass(frozen=True)
class SamplePlan:
    spec: GridSpec
    region_id: str
    points: tuple[SamplePoint, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        ids = [p.point_id for p in self.points]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate point_id in plan")


def _sorted_points(points: list[SamplePoint]) -> tuple[SamplePoint, ...]:
    return tuple(sorted(points, key=lambda p: (p.location.lat_deg, p.location.lon_deg)))


def build_systematic_grid(region: RegionPolygon, spec: GridSpec) -> SamplePlan:
    """Lay a fixed-step lattice over the region and keep the interior points.

    The lattice is anchored at ``spec.anchor`` (bounding-box min corner by
    default) and stepped by the meter-to-degree conversion evaluated once at
    the box's mid-latitude; rows and columns span the box inclusively.
    """
    if spec.strategy != "systematic":
        raise ValueError("build_systematic_grid needs a systematic GridSpec")
    bbox = region.bbox
    dlat, dlon = local_degree_steps(
        GeoPoint(bbox.mid_lat, bbox.min_lon), spec.spacing_m
    )
    anchor = spec.anchor or GeoPoint(bbox.min_lat, bbox.min_lon)

    def index_range(lo: float, hi: float, origin: float, step: float) -> range:
        i_lo = math.ceil((lo - origin - _BOUNDARY_EPS_DEG) / step)
        i_hi = math.floor((hi - origin + _BOUNDARY_EPS_DEG) / step)
        return range(i_lo, i_hi + 1)

    points: list[SamplePoint] = []
    for i in index_range(bbox.min_lat, bbox.max_lat, anchor.lat_deg, dlat):
        lat = anchor.lat_deg + i * dlat
        if not -90.0 <= lat <= 90.0:
            continue
        for j in index_range(bbox.min_lon, bbox.max_lon, anchor.lon_deg, dlon):
            lon = anchor.lon_deg + j * dlon
            if not -180.0 <= lon < 180.0:
                continue
            candidate = GeoPoint(lat, lon)
            if point_in_polygon(candidate, region):
                points.append(SamplePoint.at(candidate))
    if not points:
        raise EmptyRegionError(
            f"no lattice point of spacing {spec.spacing_m} m falls inside "
            f"region {region.region_id!r}"
        )
    return SamplePlan(spec=spec, region_id=region.region_id, points=_sorted_points(points))


def sample_random(region: RegionPolygon, spec: GridSpec) -> SamplePlan:
    """Draw ``spec.n_random`` points uniformly over the region (seeded)."""
    if spec.strategy != "random":
        raise ValueError("sample_random needs a random GridSpec")
    bbox = region.bbox
    rng = random.Random(spec.seed)
    points: list[SamplePoint] = []
    seen_ids: set[str] = set()
    budget = _MAX_REJECTIONS_PER_POINT * max(spec.n_random, 1)
    consecutive_rejections = 0
    while len(points) < spec.n_random:
        lat = rng.uniform(bbox.min_lat, bbox.max_lat)
        lon = rng.uniform(bbox.min_lon, bbox.max_lon)
        candidate = GeoPoint(lat, lon)
        sp = SamplePoint.at(candidate)
        if point_in_polygon(candidate, region) and sp.point_id not in seen_ids:
            points.append(sp)
            seen_ids.add(sp.point_id)
            consecutive_rejections = 0
        else:
            consecutive_rejections += 1
            if consecutive_rejections >= budget:
                raise RejectionOverflowError(
                    f"{consecutive_rejections} consecutive rejections sampling "
                    f"region {region.region_id!r}; region too thin for its box"
                )
    return SamplePlan(spec=spec, region_id=region.region_id, points=_sorted_points(points))


def coverage_filter(plan: SamplePlan, manifest: "Manifest") -> SamplePlan:
    """Keep only points whose every acquired view is first-party imagery.

    A point with any external-provider, failed, or unmapped view would bias
    the summed per-location level downward, so it is dropped whole; points
    with no records at all count as unmapped.
    """
    by_point: dict[str, list] = {}
    for record in manifest:
        by_point.setdefault(record.point_id, []).append(record)

    kept = []
    for point in plan.points:
        records = by_point.get(point.point_id)
        if not records:
            continue
        if all(r.status == "ok" and r.provider == "first_party" for r in records):
            kept.append(point)
    return SamplePlan(spec=plan.spec, region_id=plan.region_id, points=tuple(kept))


# ---- plan file format (JSON Lines) ------------------------------------------


def save_plan(plan: SamplePlan, path: str | Path) -> None:
    """Write a plan as JSONL: one header object, then one object per point."""
    header: dict = {"region_id": plan.region_id, "strategy": plan.spec.strategy}
    if plan.spec.strategy == "systematic":
        header["spacing_m"] = plan.spec.spacing_m
    else:
        header["n_random"] = plan.spec.n_random
        header["seed"] = plan.spec.seed
    anchor = plan.spec.anchor
    header["anchor"] = (
        None if anchor is None else {"lat": anchor.lat_deg, "lon": anchor.lon_deg}
    )
    lines = [json.dumps(header, sort_keys=True)]
    for p in plan.points:
        lines.append(
            json.dumps(
                {"point_id": p.point_id, "lat": p.location.lat_deg, "lon": p.location.lon_deg}
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_plan(path: str | Path) -> SamplePlan:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"empty plan file: {path}")
    header = json.loads(lines[0])
    anchor = header.get("anchor")
    spec = GridSpec(
        spacing_m=header.get("spacing_m", DEFAULT_SPACING_M),
        anchor=None if anchor is None else GeoPoint(anchor["lat"], anchor["lon"]),
        strategy=header["strategy"],
        n_random=header.get("n_random", 0),
        seed=header.get("seed", 0),
    )
    points = []
    for line in lines[1:]:
        if not line.strip():
            continue
        obj = json.loads(line)
        points.append(
            SamplePoint(point_id=obj["point_id"], location=GeoPoint(obj["lat"], obj["lon"]))
        )
    return SamplePlan(spec=spec, region_id=header["region_id"], points=tuple(points))
