"""Image acquisition: per-point view planning, fetching, and the manifest.

Fetches go through a ProviderClient implementation (see tagmap.providers),
optionally rate limited and fanned out over a bounded worker pool. Every
(point, heading) pair ends up as exactly one immutable ImageRecord in an
append-only manifest; records already present are never re-fetched.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

from tagmap.errors import InvalidKError, ProviderAuthError
from tagmap.geo import GeoPoint
from tagmap.metrics import YearHistogram
from tagmap.sampling import SamplePlan, SamplePoint

DEFAULT_FOV_DEG = 90.0
DEFAULT_IMAGE_SIZE_PX = 640
DEFAULT_WORKERS = 8

MANIFEST_FIELDS = (
    "image_id",
    "point_id",
    "heading_deg",
    "capture_year",
    "provider",
    "width_px",
    "height_px",
    "storage_ref",
    "status",
)


@dataclass(frozen=True)
class ViewRequest:
    """One perspective image to take: where to stand is the point, this is where to look."""

    point_id: str
    heading_deg: float
    fov_deg: float = DEFAULT_FOV_DEG
    width_px: int = DEFAULT_IMAGE_SIZE_PX
    height_px: int = DEFAULT_IMAGE_SIZE_PX

    def __post_init__(self) -> None:
        if not 0.0 <= self.heading_deg < 360.0:
            raise ValueError(f"heading {self.heading_deg} outside [0, 360)")
        if not 0.0 < self.fov_deg <= 120.0:
            raise ValueError(f"fov {self.fov_deg} outside (0, 120]")
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("image dimensions must be positive")


def make_image_id(point_id: str, heading_deg: float) -> str:
    """Deterministic image id from the (point, heading) pair."""
    digest = hashlib.sha1(f"{point_id}:{heading_deg:g}".encode("utf-8")).hexdigest()
    return digest[:16]


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    point_id: str
    heading_deg: float
    provider: str  # "first_party" | "external"
    width_px: int
    height_px: int
    status: str  # "ok" | "unmapped" | "failed"
    capture_year: int | None = None
    storage_ref: str | None = None

    def __post_init__(self) -> None:
        if self.provider not in ("first_party", "external"):
            raise ValueError(f"unknown provider kind {self.provider!r}")
        if self.status not in ("ok", "unmapped", "failed"):
            raise ValueError(f"unknown status {self.status!r}")
        if self.status == "ok":
            if not self.storage_ref:
                raise ValueError("status=ok record needs a storage_ref")
            if self.width_px <= 0 or self.height_px <= 0:
                raise ValueError("status=ok record needs positive dimensions")


class Manifest:
    """Append-only sequence of ImageRecords with unique image_ids."""

    def __init__(self, records: Iterator[ImageRecord] | list[ImageRecord] = ()) -> None:
        self._records: list[ImageRecord] = []
        self._by_id: dict[str, ImageRecord] = {}
        for record in records:
            self.append(record)

    def append(self, record: ImageRecord) -> None:
        if record.image_id in self._by_id:
            raise ValueError(f"duplicate image_id {record.image_id!r}")
        self._records.append(record)
        self._by_id[record.image_id] = record

    def get(self, image_id: str) -> ImageRecord | None:
        return self._by_id.get(image_id)

    def __contains__(self, image_id: str) -> bool:
        return image_id in self._by_id

    def __iter__(self) -> Iterator[ImageRecord]:
        return iter(self._records)

    def __len__(self) -> int:
        return len(self._records)


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    """One JSON object per line; capture_year omitted when unknown."""
    lines = []
    for r in manifest:
        obj = {
            "image_id": r.image_id,
            "point_id": r.point_id,
            "heading_deg": r.heading_deg,
            "provider": r.provider,
            "width_px": r.width_px,
            "height_px": r.height_px,
            "storage_ref": r.storage_ref,
            "status": r.status,
        }
        if r.capture_year is not None:
            obj["capture_year"] = r.capture_year
        lines.append(json.dumps(obj, sort_keys=True))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_manifest(path: str | Path) -> Manifest:
    manifest = Manifest()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        manifest.append(
            ImageRecord(
                image_id=obj["image_id"],
                point_id=obj["point_id"],
                heading_deg=obj["heading_deg"],
                provider=obj["provider"],
                width_px=obj["width_px"],
                height_px=obj["height_px"],
                status=obj["status"],
                capture_year=obj.get("capture_year"),
                storage_ref=obj.get("storage_ref"),
            )
        )
    return manifest


@dataclass(frozen=True)
class ProbeInfo:
    """Metadata-only answer: what a fetch would record, without the payload."""

    provider: str
    status: str
    capture_year: int | None = None


class ProviderClient(ABC):
    """Street-imagery source. Implementations must be deterministic given
    identical remote state and must label external-attribution imagery as
    provider="external"."""

    @abstractmethod
    def fetch(self, view: ViewRequest, at: GeoPoint) -> ImageRecord:
        """Fetch one view, store its payload, and return the record."""

    @abstractmethod
    def probe(self, view: ViewRequest, at: GeoPoint) -> ProbeInfo:
        """Metadata-only variant of fetch."""


class RateLimiter:
    """Token bucket; acquire() blocks until a request slot is available.

    Clock and sleep are injectable so tests can drive simulated time.
    """

    def __init__(
        self,
        rate_per_s: float,
        capacity: float = 1.0,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if rate_per_s <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate_per_s
        self.capacity = capacity
        self._clock = clock
        self._sleep = sleep
        self._tokens = capacity
        self._stamp = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._stamp) * self.rate)
                self._stamp = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


def plan_views(point: SamplePoint, k: int) -> list[ViewRequest]:
    """k equally spaced compass headings starting at 0 (k=4 -> 0/90/180/270)."""
    if k < 1:
        raise InvalidKError(f"views per point must be >= 1, got {k}")
    return [ViewRequest(point_id=point.point_id, heading_deg=i * 360.0 / k) for i in range(k)]


def acquire(
    plan: SamplePlan,
    k: int,
    client: ProviderClient,
    store: Manifest,
    *,
    workers: int = DEFAULT_WORKERS,
    rate_limiter: RateLimiter | None = None,
    retries: int = 3,
    backoff_base_s: float = 1.0,
    backoff_factor: float = 2.0,
    sleep: Callable[[float], None] = time.sleep,
) -> Manifest:
    """Fetch every (point, heading) view not already present in the manifest.

    Failed fetches are retried with exponential backoff and recorded as
    status="failed" once retries are exhausted; a ProviderAuthError aborts
    the whole run. Records are appended in (plan, heading) order regardless
    of worker completion order, so the manifest is deterministic.
    """
    tasks: list[tuple[SamplePoint, ViewRequest, str]] = []
    for point in plan.points:
        for view in plan_views(point, k):
            image_id = make_image_id(point.point_id, view.heading_deg)
            if image_id not in store:
                tasks.append((point, view, image_id))
    if not tasks:
        return store

    def fetch_one(task: tuple[SamplePoint, ViewRequest, str]) -> ImageRecord:
        point, view, image_id = task
        attempt = 0
        while True:
            try:
                if rate_limiter is not None:
                    rate_limiter.acquire()
                return client.fetch(view, point.location)
            except ProviderAuthError:
                raise
            except Exception:
                if attempt >= retries:
                    return ImageRecord(
                        image_id=image_id,
                        point_id=point.point_id,
                        heading_deg=view.heading_deg,
                        provider="first_party",
                        width_px=view.width_px,
                        height_px=view.height_px,
                        status="failed",
                    )
                sleep(backoff_base_s * backoff_factor**attempt)
                attempt += 1

    if workers <= 1:
        results = [fetch_one(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fetch_one, tasks))

    for (point, view, image_id), record in zip(tasks, results):
        if record.image_id != image_id:
            raise ValueError(
                f"provider returned image_id {record.image_id!r}, expected {image_id!r}"
            )
        store.append(record)
    return store


def year_histogram(manifest: Manifest) -> YearHistogram:
    """Count status=ok records by capture year; missing years go to 'unknown'."""
    counts: dict[int, int] = {}
    unknown = 0
    for record in manifest:
        if record.status != "ok":
            continue
        if record.capture_year is None:
            unknown += 1
        else:
            counts[record.capture_year] = counts.get(record.capture_year, 0) + 1
    return YearHistogram(counts=counts, unknown=unknown)
