"""Graffiti-detection results: region geometry, areas, and detector backends.

Regions are polygon outlines in pixel coordinates. Areas come from the
shoelace formula; unions (and IoU, in tagmap.evaluation) are computed by
rasterizing polygons into a shared bitmask at 1 px resolution using
pixel-center sampling, so an axis-aligned W x H box covers exactly W*H
pixels.
"""

from __future__ import annotations

import base64
import json
import math
import random
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests

from tagmap.errors import DetectorBackendError

GRAFFITI_LABEL = "graffiti-tag"
DEFAULT_CONFIDENCE_TAU = 0.5

PixelVertex = tuple[float, float]


@dataclass(frozen=True)
class DetectionRegion:
    """One detected graffiti region: a pixel-space polygon plus a confidence."""

    polygon_px: tuple[PixelVertex, ...]
    confidence: float
    label: str = GRAFFITI_LABEL

    def __post_init__(self) -> None:
        if len(self.polygon_px) < 3:
            raise ValueError("region polygon needs at least 3 vertices")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        object.__setattr__(
            self, "polygon_px", tuple((float(x), float(y)) for x, y in self.polygon_px)
        )


@dataclass(frozen=True)
class DetectionSet:
    image_id: str
    detector_id: str
    regions: tuple[DetectionRegion, ...] = field(default_factory=tuple)


def polygon_area_px(region: DetectionRegion) -> float:
    """Shoelace area in square pixels; winding-independent, 0 for degenerate rings."""
    return shoelace_area(region.polygon_px)


def shoelace_area(polygon: tuple[PixelVertex, ...]) -> float:
    acc = 0.0
    n = len(polygon)
    for i in range(n):
        x1, y1 = polygon[i]
        x2, y2 = polygon[(i + 1) % n]
        acc += x1 * y2 - x2 * y1
    return abs(acc) / 2.0


def rasterize_polygon(mask: np.ndarray, polygon: tuple[PixelVertex, ...]) -> None:
    """Set mask pixels whose centers fall inside the polygon (even-odd rule).

    Scanline fill: pixel (x, y) samples the point (x + 0.5, y + 0.5).
    """
    height, width = mask.shape
    ys = [p[1] for p in polygon]
    y_first = max(0, math.ceil(min(ys) - 0.5))
    y_last = min(height - 1, math.floor(max(ys) - 0.5))
    n = len(polygon)
    edges = [(polygon[i], polygon[(i + 1) % n]) for i in range(n)]
    for y in range(y_first, y_last + 1):
        yc = y + 0.5
        xs = []
        for (x1, y1), (x2, y2) in edges:
            if (y1 > yc) != (y2 > yc):  # half-open straddle; skips horizontals
                xs.append(x1 + (yc - y1) * (x2 - x1) / (y2 - y1))
        xs.sort()
        for i in range(0, len(xs) - 1, 2):
            x_start = max(0, math.ceil(xs[i] - 0.5))
            x_end = min(width, math.ceil(xs[i + 1] - 0.5))
            if x_end > x_start:
                mask[y, x_start:x_end] = True


def union_mask(
    polygons: list[tuple[PixelVertex, ...]], width_px: int, height_px: int
) -> np.ndarray:
    mask = np.zeros((height_px, width_px), dtype=bool)
    for polygon in polygons:
        rasterize_polygon(mask, polygon)
    return mask


def union_area_px(
    regions: list[DetectionRegion] | tuple[DetectionRegion, ...],
    width_px: int,
    height_px: int,
) -> float:
    """Area of the union of the regions, in square pixels (rasterized)."""
    if not regions:
        return 0.0
    mask = union_mask([r.polygon_px for r in regions], width_px, height_px)
    return float(mask.sum())


def filter_by_confidence(dset: DetectionSet, tau: float) -> DetectionSet:
    """Keep regions with confidence >= tau, preserving order."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau {tau} outside [0, 1]")
    kept = tuple(r for r in dset.regions if r.confidence >= tau)
    return DetectionSet(image_id=dset.image_id, detector_id=dset.detector_id, regions=kept)


# ---- file format -------------------------------------------------------------


def detection_set_to_json(dset: DetectionSet) -> dict:
    return {
        "image_id": dset.image_id,
        "detector_id": dset.detector_id,
        "regions": [
            {"polygon": [[x, y] for x, y in r.polygon_px], "confidence": r.confidence}
            for r in dset.regions
        ],
    }


def detection_set_from_json(obj: dict) -> DetectionSet:
    regions = tuple(
        DetectionRegion(
            polygon_px=tuple((v[0], v[1]) for v in r["polygon"]),
            confidence=float(r["confidence"]),
        )
        for r in obj.get("regions", [])
    )
    return DetectionSet(
        image_id=obj["image_id"],
        detector_id=obj.get("detector_id", "unknown"),
        regions=regions,
    )


def save_detection_set(dset: DetectionSet, directory: str | Path) -> Path:
    """Write <directory>/<image_id>.json in the canonical wire format."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{dset.image_id}.json"
    path.write_text(json.dumps(detection_set_to_json(dset), sort_keys=True), encoding="utf-8")
    return path


# ---- backends ----------------------------------------------------------------


class DetectorBackend(ABC):
    """Produces one DetectionSet per image; must be deterministic per config
    and safe for concurrent detect calls on distinct images."""

    @abstractmethod
    def detect(
        self, image_id: str, image_ref: str | None, width_px: int, height_px: int
    ) -> DetectionSet:
        ...


class FileBackend(DetectorBackend):
    """Reads precomputed DetectionSet files, one <image_id>.json per image.

    Images without a file yield an empty DetectionSet.
    """

    def __init__(self, root: str | Path, detector_id: str = "file") -> None:
        self.root = Path(root)
        self.detector_id = detector_id

    def detect(
        self, image_id: str, image_ref: str | None, width_px: int, height_px: int
    ) -> DetectionSet:
        path = self.root / f"{image_id}.json"
        if not path.exists():
            return DetectionSet(image_id=image_id, detector_id=self.detector_id)
        obj = json.loads(path.read_text(encoding="utf-8"))
        dset = detection_set_from_json(obj)
        if dset.image_id != image_id:
            raise DetectorBackendError(
                f"{path} declares image_id {dset.image_id!r}, expected {image_id!r}"
            )
        return dset


class SyntheticBackend(DetectorBackend):
    """Seeded generator of box-shaped detections, for tests and the demo run.

    Boxes have integer pixel corners, so their shoelace and rasterized areas
    agree exactly. The generating truth is exposed so an evaluation against
    this backend's own output scores a perfect AP.
    """

    def __init__(self, seed: int = 0, detector_id: str = "synthetic") -> None:
        self.seed = seed
        self.detector_id = detector_id

    def _boxes(
        self, image_id: str, width_px: int, height_px: int
    ) -> list[tuple[tuple[PixelVertex, ...], float]]:
        rng = random.Random(f"{self.seed}:{image_id}")
        count = rng.choices([0, 1, 2, 3], weights=[3, 4, 2, 1])[0]
        boxes = []
        for _ in range(count):
            w = rng.randint(max(4, width_px // 16), max(5, width_px // 4))
            h = rng.randint(max(4, height_px // 16), max(5, height_px // 4))
            x0 = rng.randint(0, max(0, width_px - w))
            y0 = rng.randint(0, max(0, height_px - h))
            polygon = (
                (float(x0), float(y0)),
                (float(x0 + w), float(y0)),
                (float(x0 + w), float(y0 + h)),
                (float(x0), float(y0 + h)),
            )
            boxes.append((polygon, round(rng.uniform(0.25, 0.99), 4)))
        return boxes

    def detect(
        self, image_id: str, image_ref: str | None, width_px: int, height_px: int
    ) -> DetectionSet:
        regions = tuple(
            DetectionRegion(polygon_px=polygon, confidence=conf)
            for polygon, conf in self._boxes(image_id, width_px, height_px)
        )
        return DetectionSet(image_id=image_id, detector_id=self.detector_id, regions=regions)

    def ground_truth_polygons(
        self, image_id: str, width_px: int, height_px: int
    ) -> list[tuple[PixelVertex, ...]]:
        return [polygon for polygon, _ in self._boxes(image_id, width_px, height_px)]


class RemoteBackend(DetectorBackend):
    """Calls a detector service over HTTP: POST /detect with a base64 image."""

    def __init__(
        self,
        base_url: str,
        timeout_s: float = 30.0,
        session: requests.Session | None = None,
    ) -> None:
        self.endpoint = base_url.rstrip("/") + "/detect"
        self.timeout_s = timeout_s
        self.session = session or requests.Session()

    def detect(
        self, image_id: str, image_ref: str | None, width_px: int, height_px: int
    ) -> DetectionSet:
        if image_ref is None:
            raise DetectorBackendError(f"no stored image for {image_id!r}")
        payload = {
            "image": base64.b64encode(Path(image_ref).read_bytes()).decode("ascii"),
            "width": width_px,
            "height": height_px,
        }
        response = self.session.post(self.endpoint, json=payload, timeout=self.timeout_s)
        if response.status_code != 200:
            raise DetectorBackendError(
                f"detector service returned {response.status_code} for {image_id!r}"
            )
        obj = response.json()
        dset = detection_set_from_json(obj)
        # The service identifies images by content; key the result by our id.
        return DetectionSet(
            image_id=image_id, detector_id=dset.detector_id, regions=dset.regions
        )
