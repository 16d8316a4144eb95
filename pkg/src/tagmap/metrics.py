"""Graffiti-level metrics: per-location levels and their per-region mean.

A location's level is the sum, over its k views, of the detected graffiti
area in each view; a region's score is the arithmetic mean of the levels of
the locations sampled inside it. Areas are normalized by image area by
default ("fraction" mode) so levels are comparable across image resolutions;
"raw_px" mode keeps plain square pixels. Per view, overlapping detections are
deduplicated through a rasterized union by default; "raw_sum" adds the
polygon areas as-is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from tagmap.detection import (
    DEFAULT_CONFIDENCE_TAU,
    DetectionSet,
    polygon_area_px,
    union_mask,
)
from tagmap.errors import (
    EmptyRegionError,
    MissingDimensionsError,
    OverlappingRegionsError,
)
from tagmap.geo import RegionPolygon, point_in_polygon
from tagmap.sampling import SamplePlan

MODES = ("fraction", "raw_px")
DEDUP_MODES = ("union", "raw_sum")


@dataclass(frozen=True)
class LocationLevel:
    point_id: str
    level: float
    views_counted: int

    def __post_init__(self) -> None:
        if self.level < 0:
            raise ValueError("level must be non-negative")


@dataclass(frozen=True)
class RegionScore:
    region_id: str
    n: int
    mean_level: float

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("a region score needs at least one location")


@dataclass(frozen=True)
class YearHistogram:
    """Capture-year counts for acquired images, with an 'unknown' bucket."""

    counts: dict[int, int] = field(default_factory=dict)
    unknown: int = 0

    @property
    def total(self) -> int:
        return sum(self.counts.values()) + self.unknown

    def share(self, year: int) -> float:
        if self.total == 0:
            return 0.0
        return self.counts.get(year, 0) / self.total

    def rows(self) -> list[tuple[str, int]]:
        out: list[tuple[str, int]] = [(str(y), c) for y, c in sorted(self.counts.items())]
        if self.unknown:
            out.append(("unknown", self.unknown))
        return out


def _view_area_px(
    dset: DetectionSet,
    tau: float,
    dedup: str,
    dims: tuple[int, int] | None,
) -> float:
    regions = [r for r in dset.regions if r.confidence >= tau]
    if not regions:
        return 0.0
    if dedup == "raw_sum":
        return math.fsum(polygon_area_px(r) for r in regions)
    polygons = [r.polygon_px for r in regions]
    if dims is not None:
        width, height = dims
    else:
        # Regions are in-bounds by contract, so their extent bounds the union.
        width = math.ceil(max(x for p in polygons for x, _ in p))
        height = math.ceil(max(y for p in polygons for _, y in p))
    return float(union_mask(polygons, width, height).sum())


def location_level(
    point_id: str,
    sets: Iterable[DetectionSet],
    *,
    mode: str = "fraction",
    tau: float = DEFAULT_CONFIDENCE_TAU,
    dedup: str = "union",
    dims: Mapping[str, tuple[int, int]] | None = None,
) -> LocationLevel:
    """Sum the detected graffiti area over one location's views.

    ``dims`` maps image_id to (width_px, height_px); it is required in
    fraction mode, where each view's area is divided by that view's image
    area before summing.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if dedup not in DEDUP_MODES:
        raise ValueError(f"unknown dedup {dedup!r}")
    per_view: list[float] = []
    count = 0
    for dset in sets:
        count += 1
        view_dims = dims.get(dset.image_id) if dims is not None else None
        if mode == "fraction" and view_dims is None:
            raise MissingDimensionsError(
                f"fraction mode needs image dimensions for {dset.image_id!r}"
            )
        area = _view_area_px(dset, tau, dedup, view_dims)
        if mode == "fraction":
            width, height = view_dims
            area /= width * height
        per_view.append(area)
    return LocationLevel(point_id=point_id, level=math.fsum(per_view), views_counted=count)


def region_score(region_id: str, levels: Iterable[LocationLevel]) -> RegionScore:
    """Mean location level; fsum keeps the result order-independent."""
    values = [lv.level for lv in levels]
    if not values:
        raise EmptyRegionError(
            f"region {region_id!r} has no covered locations; report it as no-data"
        )
    return RegionScore(
        region_id=region_id, n=len(values), mean_level=math.fsum(values) / len(values)
    )


def score_by_region(
    regions: list[RegionPolygon],
    plan: SamplePlan,
    levels: Iterable[LocationLevel],
) -> tuple[list[RegionScore], int]:
    """Assign each location to the unique region containing it and score.

    Returns the scores (one per region with at least one location, in the
    input region order) and the count of locations that fell outside every
    region and were dropped.
    """
    points_by_id = {p.point_id: p.location for p in plan.points}
    assigned: dict[str, list[LocationLevel]] = {r.region_id: [] for r in regions}
    dropped = 0
    for level in levels:
        location = points_by_id.get(level.point_id)
        if location is None:
            raise ValueError(f"level for unknown point_id {level.point_id!r}")
        containing = [r for r in regions if point_in_polygon(location, r)]
        if len(containing) > 1:
            ids = [r.region_id for r in containing]
            raise OverlappingRegionsError(
                f"point {level.point_id!r} falls inside regions {ids}"
            )
        if not containing:
            dropped += 1
            continue
        assigned[containing[0].region_id].append(level)
    scores = [
        region_score(region_id, lvls) for region_id, lvls in assigned.items() if lvls
    ]
    return scores, dropped
