"""Model slot: anything that maps image bytes to detection-set JSON.

The stub model answers from a fixtures file keyed by the SHA-256 of the
image content; unknown images yield an empty detection set. A real
instance-segmentation model is a drop-in replacement: implement
``detect(image_bytes, width, height) -> dict`` and pass it to create_app.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Protocol


class FixtureValidationError(ValueError):
    """A fixtures file entry is malformed (bad polygon, confidence, bounds)."""


class Model(Protocol):
    model_id: str

    def detect(self, image_bytes: bytes, width: int, height: int) -> dict:
        """Return detection-set JSON: {image_id, detector_id, regions}."""
        ...


def _validate_regions(entry_name: str, detections: dict, width: int, height: int) -> None:
    for idx, region in enumerate(detections.get("regions", [])):
        polygon = region.get("polygon", [])
        if len(polygon) < 3:
            raise FixtureValidationError(
                f"{entry_name}: region {idx} polygon needs at least 3 vertices"
            )
        for x, y in polygon:
            if not (0 <= x <= width and 0 <= y <= height):
                raise FixtureValidationError(
                    f"{entry_name}: region {idx} vertex ({x}, {y}) outside "
                    f"{width}x{height} image bounds"
                )
        confidence = region.get("confidence")
        if confidence is None or not 0.0 <= confidence <= 1.0:
            raise FixtureValidationError(
                f"{entry_name}: region {idx} confidence {confidence!r} outside [0, 1]"
            )


class StubModel:
    """Deterministic lookup model backed by a fixtures file.

    Fixtures schema::

        {"fixtures": [
            {"sha256": "<hex of image bytes>", "width": W, "height": H,
             "detections": {"image_id": ..., "detector_id": ...,
                            "regions": [{"polygon": [[x, y], ...],
                                         "confidence": c}, ...]}}
        ]}
    """

    model_id = "stub"

    def __init__(self, by_hash: dict[str, dict] | None = None) -> None:
        self._by_hash = dict(by_hash or {})

    @classmethod
    def from_fixtures_file(cls, path: str | Path) -> "StubModel":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        by_hash: dict[str, dict] = {}
        for i, entry in enumerate(doc.get("fixtures", [])):
            name = f"fixture[{i}]"
            for key in ("sha256", "width", "height", "detections"):
                if key not in entry:
                    raise FixtureValidationError(f"{name}: missing key {key!r}")
            _validate_regions(name, entry["detections"], entry["width"], entry["height"])
            by_hash[entry["sha256"]] = entry["detections"]
        return cls(by_hash)

    def detect(self, image_bytes: bytes, width: int, height: int) -> dict:
        digest = hashlib.sha256(image_bytes).hexdigest()
        hit = self._by_hash.get(digest)
        if hit is not None:
            return hit
        return {"image_id": digest, "detector_id": self.model_id, "regions": []}
