from __future__ import annotations

import io
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest
from PIL import Image

from tagmap.acquisition import ViewRequest, make_image_id
from tagmap.errors import ProviderAuthError, ProviderFetchError
from tagmap.geo import GeoPoint
from tagmap.providers import DirectoryProvider, HttpProvider, SimulatedProvider

AT = GeoPoint(-23.55, -46.63)


def view(point_id="p0", heading=0.0, size=64):
    return ViewRequest(point_id=point_id, heading_deg=heading, width_px=size, height_px=size)


class TestSimulatedProvider:
    def test_fetch_is_deterministic(self, tmp_path):
        a = SimulatedProvider(tmp_path / "a", seed=5).fetch(view(), AT)
        b = SimulatedProvider(tmp_path / "b", seed=5).fetch(view(), AT)
        assert (a.capture_year, a.provider, a.status) == (b.capture_year, b.provider, b.status)
        bytes_a = (tmp_path / "a" / f"{a.image_id}.png").read_bytes()
        bytes_b = (tmp_path / "b" / f"{b.image_id}.png").read_bytes()
        assert bytes_a == bytes_b

    def test_probe_matches_fetch_metadata(self, tmp_path):
        provider = SimulatedProvider(tmp_path, seed=5, external_points={"p1"})
        for v in (view("p0"), view("p1")):
            probe = provider.probe(v, AT)
            record = provider.fetch(v, AT)
            assert (probe.provider, probe.status, probe.capture_year) == (
                record.provider,
                record.status,
                record.capture_year,
            )

    def test_external_view_granularity(self, tmp_path):
        provider = SimulatedProvider(tmp_path, seed=1, external_views={("p0", 90.0)})
        assert provider.fetch(view("p0", 0.0), AT).provider == "first_party"
        assert provider.fetch(view("p0", 90.0), AT).provider == "external"

    def test_capture_years_span_expected_range(self, tmp_path):
        provider = SimulatedProvider(tmp_path, seed=3)
        years = {
            provider.probe(view(f"p{i}"), AT).capture_year for i in range(200)
        }
        known = {y for y in years if y is not None}
        assert known <= set(range(2010, 2019))
        assert len(known) > 3  # spread, not constant


class TestDirectoryProvider:
    def test_reads_corpus_with_sidecar(self, tmp_path):
        stem = tmp_path / "p0_0"
        Image.new("RGB", (320, 240), (1, 2, 3)).save(stem.with_suffix(".jpg"))
        stem.with_suffix(".json").write_text(
            json.dumps({"capture_year": 2016, "provider": "external"})
        )
        record = DirectoryProvider(tmp_path).fetch(view(), AT)
        assert record.status == "ok"
        assert record.capture_year == 2016
        assert record.provider == "external"
        assert (record.width_px, record.height_px) == (320, 240)
        assert record.image_id == make_image_id("p0", 0.0)

    def test_missing_file_is_unmapped(self, tmp_path):
        record = DirectoryProvider(tmp_path).fetch(view("absent"), AT)
        assert record.status == "unmapped"
        assert DirectoryProvider(tmp_path).probe(view("absent"), AT).status == "unmapped"

    def test_without_sidecar_defaults_first_party_no_year(self, tmp_path):
        Image.new("RGB", (64, 64)).save(tmp_path / "p0_90.png")
        record = DirectoryProvider(tmp_path).fetch(view("p0", 90.0), AT)
        assert record.provider == "first_party"
        assert record.capture_year is None


class _ImageHandler(BaseHTTPRequestHandler):
    status_code = 200
    headers_extra: dict = {}
    last_query: str = ""

    def do_GET(self):
        _ImageHandler.last_query = self.path
        if self.status_code != 200:
            self.send_response(self.status_code)
            self.end_headers()
            return
        buf = io.BytesIO()
        Image.new("RGB", (64, 64), (7, 7, 7)).save(buf, format="PNG")
        body = buf.getvalue()
        self.send_response(200)
        self.send_header("Content-Type", "image/png")
        for key, value in self.headers_extra.items():
            self.send_header(key, value)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def image_server():
    server = HTTPServer(("127.0.0.1", 0), _ImageHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}/street"
    server.shutdown()


class TestHttpProvider:
    def test_fetch_stores_payload_and_reads_headers(self, tmp_path, image_server):
        _ImageHandler.status_code = 200
        _ImageHandler.headers_extra = {"X-Capture-Year": "2017", "X-Provider": "first_party"}
        provider = HttpProvider(image_server, tmp_path, api_key="sekrit")
        record = provider.fetch(view(), AT)
        assert record.status == "ok"
        assert record.capture_year == 2017
        assert record.provider == "first_party"
        assert record.storage_ref and record.storage_ref.endswith(".png")
        assert (tmp_path / f"{record.image_id}.png").exists()
        query = _ImageHandler.last_query
        for param in ("lat=", "lon=", "heading=", "fov=", "w=64", "h=64", "key=sekrit"):
            assert param in query

    def test_external_attribution_header(self, tmp_path, image_server):
        _ImageHandler.status_code = 200
        _ImageHandler.headers_extra = {"X-Provider": "external"}
        record = HttpProvider(image_server, tmp_path, api_key=None).fetch(view(), AT)
        assert record.provider == "external"

    def test_auth_failure_is_fatal(self, tmp_path, image_server):
        _ImageHandler.status_code = 403
        provider = HttpProvider(image_server, tmp_path, api_key="bad")
        with pytest.raises(ProviderAuthError):
            provider.fetch(view(), AT)

    def test_non_200_is_retryable_failure(self, tmp_path, image_server):
        _ImageHandler.status_code = 503
        provider = HttpProvider(image_server, tmp_path, api_key=None)
        with pytest.raises(ProviderFetchError):
            provider.fetch(view(), AT)

    def test_key_read_from_environment(self, tmp_path, image_server, monkeypatch):
        _ImageHandler.status_code = 200
        _ImageHandler.headers_extra = {}
        monkeypatch.setenv("TAGMAP_PROVIDER_KEY", "env-key")
        provider = HttpProvider(image_server, tmp_path)
        provider.fetch(view(), AT)
        assert "key=env-key" in _ImageHandler.last_query
