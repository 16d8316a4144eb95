"""Provider implementations: simulated, directory-backed, and generic HTTP.

The simulated provider synthesizes deterministic imagery and metadata from a
seed and supports scripted external/unmapped zones, which is enough to
exercise every pipeline path without a real imagery service. The directory
provider attaches a pre-downloaded local corpus. The HTTP provider speaks a
generic GET protocol with lat/lon/heading/fov/size query parameters.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import requests
from PIL import Image

from tagmap.acquisition import ImageRecord, ProbeInfo, ProviderClient, ViewRequest, make_image_id
from tagmap.errors import ProviderAuthError, ProviderFetchError
from tagmap.geo import GeoPoint

PROVIDER_KEY_ENV = "TAGMAP_PROVIDER_KEY"

_YEAR_SPAN = (2010, 2018)  # simulated capture years, inclusive


class SimulatedProvider(ProviderClient):
    """Deterministic imagery from a seed, with scriptable gaps.

    ``external_points`` marks every view of a point as external-attribution
    imagery; ``external_views`` marks single (point_id, heading) views.
    ``unmapped_points`` yields status="unmapped" records. ``fail_counts``
    maps (point_id, heading) to a number of times fetches should fail before
    succeeding, for retry testing.
    """

    def __init__(
        self,
        image_dir: str | Path,
        seed: int = 0,
        external_points: set[str] | frozenset[str] = frozenset(),
        external_views: set[tuple[str, float]] | frozenset = frozenset(),
        unmapped_points: set[str] | frozenset[str] = frozenset(),
        fail_counts: dict[tuple[str, float], int] | None = None,
    ) -> None:
        self.image_dir = Path(image_dir)
        self.seed = seed
        self.external_points = set(external_points)
        self.external_views = set(external_views)
        self.unmapped_points = set(unmapped_points)
        self._fail_remaining = dict(fail_counts or {})

    def _digest(self, text: str) -> bytes:
        return hashlib.sha256(f"{self.seed}:{text}".encode("utf-8")).digest()

    def _capture_year(self, point_id: str) -> int | None:
        d = self._digest(point_id)
        if d[1] % 16 == 0:
            return None  # some imagery carries no capture date
        lo, hi = _YEAR_SPAN
        return lo + d[0] % (hi - lo + 1)

    def _provider_kind(self, view: ViewRequest) -> str:
        if view.point_id in self.external_points:
            return "external"
        if (view.point_id, view.heading_deg) in self.external_views:
            return "external"
        return "first_party"

    def probe(self, view: ViewRequest, at: GeoPoint) -> ProbeInfo:
        if view.point_id in self.unmapped_points:
            return ProbeInfo(provider="first_party", status="unmapped")
        return ProbeInfo(
            provider=self._provider_kind(view),
            status="ok",
            capture_year=self._capture_year(view.point_id),
        )

    def fetch(self, view: ViewRequest, at: GeoPoint) -> ImageRecord:
        image_id = make_image_id(view.point_id, view.heading_deg)
        key = (view.point_id, view.heading_deg)
        if self._fail_remaining.get(key, 0) > 0:
            self._fail_remaining[key] -= 1
            raise ProviderFetchError(f"scripted transient failure for {key}")
        info = self.probe(view, at)
        if info.status != "ok":
            return ImageRecord(
                image_id=image_id,
                point_id=view.point_id,
                heading_deg=view.heading_deg,
                provider=info.provider,
                width_px=view.width_px,
                height_px=view.height_px,
                status=info.status,
            )
        self.image_dir.mkdir(parents=True, exist_ok=True)
        path = self.image_dir / f"{image_id}.png"
        if not path.exists():
            color = tuple(self._digest(image_id)[:3])
            Image.new("RGB", (view.width_px, view.height_px), color).save(path, format="PNG")
        return ImageRecord(
            image_id=image_id,
            point_id=view.point_id,
            heading_deg=view.heading_deg,
            provider=info.provider,
            width_px=view.width_px,
            height_px=view.height_px,
            status="ok",
            capture_year=info.capture_year,
            storage_ref=str(path),
        )


class DirectoryProvider(ProviderClient):
    """Attach a pre-downloaded corpus: <root>/<point_id>_<heading>.<ext>.

    An optional sidecar <stem>.json may carry {"capture_year": ..,
    "provider": ..}; absent files produce status="unmapped" records.
    """

    EXTENSIONS = (".png", ".jpg", ".jpeg")

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)

    def _locate(self, view: ViewRequest) -> Path | None:
        stem = f"{view.point_id}_{view.heading_deg:g}"
        for ext in self.EXTENSIONS:
            candidate = self.root / f"{stem}{ext}"
            if candidate.exists():
                return candidate
        return None

    def _sidecar(self, image_path: Path) -> dict:
        sidecar = image_path.with_suffix(".json")
        if sidecar.exists():
            return json.loads(sidecar.read_text(encoding="utf-8"))
        return {}

    def probe(self, view: ViewRequest, at: GeoPoint) -> ProbeInfo:
        path = self._locate(view)
        if path is None:
            return ProbeInfo(provider="first_party", status="unmapped")
        meta = self._sidecar(path)
        return ProbeInfo(
            provider=meta.get("provider", "first_party"),
            status="ok",
            capture_year=meta.get("capture_year"),
        )

    def fetch(self, view: ViewRequest, at: GeoPoint) -> ImageRecord:
        image_id = make_image_id(view.point_id, view.heading_deg)
        path = self._locate(view)
        if path is None:
            return ImageRecord(
                image_id=image_id,
                point_id=view.point_id,
                heading_deg=view.heading_deg,
                provider="first_party",
                width_px=view.width_px,
                height_px=view.height_px,
                status="unmapped",
            )
        meta = self._sidecar(path)
        with Image.open(path) as img:
            width, height = img.size
        return ImageRecord(
            image_id=image_id,
            point_id=view.point_id,
            heading_deg=view.heading_deg,
            provider=meta.get("provider", "first_party"),
            width_px=width,
            height_px=height,
            status="ok",
            capture_year=meta.get("capture_year"),
            storage_ref=str(path),
        )


class HttpProvider(ProviderClient):
    """Generic street-imagery HTTP endpoint.

    GET <base_url>?lat=..&lon=..&heading=..&fov=..&w=..&h=..[&key=..] must
    return the image bytes; the optional X-Capture-Year and X-Provider
    response headers feed record metadata. 401/403 aborts the run; any other
    non-200 is a retryable failure.
    """

    def __init__(
        self,
        base_url: str,
        image_dir: str | Path,
        api_key: str | None = None,
        timeout_s: float = 30.0,
        session: requests.Session | None = None,
    ) -> None:
        self.base_url = base_url
        self.image_dir = Path(image_dir)
        self.api_key = api_key if api_key is not None else os.environ.get(PROVIDER_KEY_ENV)
        self.timeout_s = timeout_s
        self.session = session or requests.Session()

    def _params(self, view: ViewRequest, at: GeoPoint) -> dict:
        params = {
            "lat": at.lat_deg,
            "lon": at.lon_deg,
            "heading": view.heading_deg,
            "fov": view.fov_deg,
            "w": view.width_px,
            "h": view.height_px,
        }
        if self.api_key:
            params["key"] = self.api_key
        return params

    def _request(self, view: ViewRequest, at: GeoPoint) -> requests.Response:
        response = self.session.get(
            self.base_url, params=self._params(view, at), timeout=self.timeout_s
        )
        if response.status_code in (401, 403):
            raise ProviderAuthError(
                f"provider rejected credentials (HTTP {response.status_code}); "
                f"set {PROVIDER_KEY_ENV}"
            )
        if response.status_code != 200:
            raise ProviderFetchError(f"provider returned HTTP {response.status_code}")
        return response

    @staticmethod
    def _metadata(response: requests.Response) -> tuple[str, int | None]:
        provider = response.headers.get("X-Provider", "first_party")
        if provider not in ("first_party", "external"):
            provider = "external"  # anything nonstandard is not first-party
        year_text = response.headers.get("X-Capture-Year")
        year = int(year_text) if year_text else None
        return provider, year

    def probe(self, view: ViewRequest, at: GeoPoint) -> ProbeInfo:
        provider, year = self._metadata(self._request(view, at))
        return ProbeInfo(provider=provider, status="ok", capture_year=year)

    def fetch(self, view: ViewRequest, at: GeoPoint) -> ImageRecord:
        image_id = make_image_id(view.point_id, view.heading_deg)
        response = self._request(view, at)
        provider, year = self._metadata(response)
        content_type = response.headers.get("Content-Type", "image/jpeg")
        ext = ".png" if "png" in content_type else ".jpg"
        self.image_dir.mkdir(parents=True, exist_ok=True)
        path = self.image_dir / f"{image_id}{ext}"
        path.write_bytes(response.content)
        return ImageRecord(
            image_id=image_id,
            point_id=view.point_id,
            heading_deg=view.heading_deg,
            provider=provider,
            width_px=view.width_px,
            height_px=view.height_px,
            status="ok",
            capture_year=year,
            storage_ref=str(path),
        )
