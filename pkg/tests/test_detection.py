from __future__ import annotations

import json
import random
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from tagmap.detection import (
    DetectionRegion,
    DetectionSet,
    FileBackend,
    RemoteBackend,
    SyntheticBackend,
    detection_set_from_json,
    detection_set_to_json,
    filter_by_confidence,
    polygon_area_px,
    save_detection_set,
    union_area_px,
    union_mask,
)
from tagmap.errors import DetectorBackendError


def box(x0, y0, x1, y1, conf=0.9):
    return DetectionRegion(
        polygon_px=((x0, y0), (x1, y0), (x1, y1), (x0, y1)), confidence=conf
    )


class TestPolygonArea:
    def test_square(self):
        assert polygon_area_px(box(0, 0, 100, 100)) == 10_000.0

    def test_triangle(self):
        tri = DetectionRegion(polygon_px=((0, 0), (100, 0), (0, 50)), confidence=0.5)
        assert polygon_area_px(tri) == 2_500.0

    def test_collinear_ring_is_zero(self):
        flat = DetectionRegion(polygon_px=((0, 0), (10, 10), (20, 20)), confidence=0.5)
        assert polygon_area_px(flat) == 0.0

    def test_winding_independent(self):
        cw = DetectionRegion(polygon_px=((0, 0), (0, 100), (100, 100), (100, 0)), confidence=0.5)
        assert polygon_area_px(cw) == 10_000.0


class TestRasterUnion:
    def test_disjoint_squares_add(self):
        regions = [box(0, 0, 100, 100), box(200, 0, 300, 100)]
        assert union_area_px(regions, 400, 200) == 20_000.0

    def test_identical_squares_idempotent(self):
        regions = [box(0, 0, 100, 100), box(0, 0, 100, 100)]
        assert union_area_px(regions, 200, 200) == 10_000.0

    def test_half_overlap_inclusion_exclusion(self):
        regions = [box(0, 0, 100, 100), box(50, 0, 150, 100)]
        assert union_area_px(regions, 200, 200) == 15_000.0

    def test_empty_regions_zero(self):
        assert union_area_px([], 100, 100) == 0.0

    def test_union_bounded_by_image(self):
        regions = [box(0, 0, 100, 100)]
        assert union_area_px(regions, 40, 40) == 40 * 40

    def test_integer_box_raster_matches_shoelace_exactly(self):
        rng = random.Random(8)
        for _ in range(50):
            x0, y0 = rng.randint(0, 80), rng.randint(0, 80)
            b = box(x0, y0, x0 + rng.randint(1, 40), y0 + rng.randint(1, 40))
            assert union_area_px([b], 128, 128) == polygon_area_px(b)

    def test_union_leq_sum_with_raster_tolerance(self):
        # Convex polygons >= 1000 px^2: raster area within 2% of shoelace.
        rng = random.Random(21)
        for _ in range(30):
            regions = []
            for _ in range(rng.randint(1, 4)):
                cx, cy = rng.uniform(60, 190), rng.uniform(60, 190)
                radius = rng.uniform(25, 50)
                angles = sorted(rng.uniform(0, 6.28318) for _ in range(rng.randint(3, 7)))
                import math

                poly = tuple(
                    (cx + radius * math.cos(a), cy + radius * math.sin(a)) for a in angles
                )
                region = DetectionRegion(polygon_px=poly, confidence=0.9)
                if polygon_area_px(region) >= 1000:
                    regions.append(region)
            if not regions:
                continue
            union = union_area_px(regions, 256, 256)
            total = sum(polygon_area_px(r) for r in regions)
            assert union <= total * 1.02
            assert union <= 256 * 256

    def test_disjoint_convex_union_equals_sum_within_2pct(self):
        import math

        rng = random.Random(5)
        for _ in range(20):
            regions = []
            for k in range(2):
                cx = 70 + 120 * k  # far apart: guaranteed disjoint
                cy = rng.uniform(60, 190)
                radius = rng.uniform(30, 50)
                angles = sorted(rng.uniform(0, 6.28318) for _ in range(6))
                poly = tuple(
                    (cx + radius * math.cos(a), cy + radius * math.sin(a)) for a in angles
                )
                regions.append(DetectionRegion(polygon_px=poly, confidence=0.9))
            if any(polygon_area_px(r) < 1000 for r in regions):
                continue
            union = union_area_px(regions, 256, 256)
            total = sum(polygon_area_px(r) for r in regions)
            assert union == pytest.approx(total, rel=0.02)

    def test_pixel_center_convention(self):
        mask = union_mask([((0.0, 0.0), (3.0, 0.0), (3.0, 2.0), (0.0, 2.0))], 4, 4)
        assert mask.sum() == 6
        assert mask[0, 0] and mask[1, 2]
        assert not mask[2, 0] and not mask[0, 3]


class TestConfidenceFilter:
    def base_set(self, confidences):
        regions = tuple(box(0, 0, 10, 10, conf=c) for c in confidences)
        return DetectionSet(image_id="img", detector_id="t", regions=regions)

    def test_tau_zero_unchanged(self):
        s = self.base_set([0.3, 0.5, 0.9])
        assert filter_by_confidence(s, 0.0) == s

    def test_tau_one_keeps_only_full_confidence(self):
        s = self.base_set([0.3, 1.0])
        kept = filter_by_confidence(s, 1.0)
        assert [r.confidence for r in kept.regions] == [1.0]

    def test_tau_half_keeps_two_of_three(self):
        s = self.base_set([0.3, 0.5, 0.9])
        kept = filter_by_confidence(s, 0.5)
        assert [r.confidence for r in kept.regions] == [0.5, 0.9]

    def test_tau_out_of_range(self):
        with pytest.raises(ValueError):
            filter_by_confidence(self.base_set([0.5]), 1.5)


class TestRegionValidation:
    def test_too_few_vertices(self):
        with pytest.raises(ValueError):
            DetectionRegion(polygon_px=((0, 0), (1, 1)), confidence=0.5)

    def test_confidence_out_of_range(self):
        with pytest.raises(ValueError):
            box(0, 0, 10, 10, conf=1.5)

    def test_label_default(self):
        assert box(0, 0, 10, 10).label == "graffiti-tag"


class TestFileFormatAndBackends:
    def test_json_round_trip(self):
        original = DetectionSet(
            image_id="img1",
            detector_id="det",
            regions=(box(1, 2, 30, 40, conf=0.75),),
        )
        assert detection_set_from_json(detection_set_to_json(original)) == original

    def test_wire_schema_field_names(self):
        obj = detection_set_to_json(
            DetectionSet(image_id="i", detector_id="d", regions=(box(0, 0, 5, 5),))
        )
        assert set(obj) == {"image_id", "detector_id", "regions"}
        assert set(obj["regions"][0]) == {"polygon", "confidence"}

    def test_file_backend_reads_saved_set(self, tmp_path):
        original = DetectionSet(
            image_id="img1", detector_id="det", regions=(box(0, 0, 8, 8),)
        )
        save_detection_set(original, tmp_path)
        backend = FileBackend(tmp_path)
        assert backend.detect("img1", None, 640, 640) == original

    def test_file_backend_missing_file_empty(self, tmp_path):
        backend = FileBackend(tmp_path)
        result = backend.detect("nope", None, 640, 640)
        assert result.regions == ()

    def test_file_backend_id_mismatch_error(self, tmp_path):
        save_detection_set(
            DetectionSet(image_id="other", detector_id="d", regions=()), tmp_path
        )
        (tmp_path / "img1.json").write_text((tmp_path / "other.json").read_text())
        with pytest.raises(DetectorBackendError):
            FileBackend(tmp_path).detect("img1", None, 640, 640)

    def test_synthetic_deterministic_and_truth_matches(self):
        backend = SyntheticBackend(seed=9)
        a = backend.detect("imgX", None, 640, 640)
        b = backend.detect("imgX", None, 640, 640)
        assert a == b
        truths = backend.ground_truth_polygons("imgX", 640, 640)
        assert [r.polygon_px for r in a.regions] == truths

    def test_synthetic_regions_within_bounds(self):
        backend = SyntheticBackend(seed=2)
        for i in range(40):
            dset = backend.detect(f"img{i}", None, 320, 240)
            for region in dset.regions:
                for x, y in region.polygon_px:
                    assert 0 <= x <= 320 and 0 <= y <= 240


class _CannedDetectHandler(BaseHTTPRequestHandler):
    canned: dict = {}
    status_code = 200

    def do_POST(self):
        length = int(self.headers.get("Content-Length", "0"))
        json.loads(self.rfile.read(length))  # request must be valid JSON
        body = json.dumps(self.canned).encode("utf-8")
        self.send_response(self.status_code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def canned_server():
    server = HTTPServer(("127.0.0.1", 0), _CannedDetectHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()


class TestRemoteBackend:
    def test_matches_file_backend_for_identical_canned_output(self, tmp_path, canned_server):
        canned = DetectionSet(
            image_id="img7", detector_id="canned", regions=(box(3, 4, 50, 60, conf=0.8),)
        )
        _CannedDetectHandler.canned = detection_set_to_json(canned)
        _CannedDetectHandler.status_code = 200
        save_detection_set(canned, tmp_path / "dets")
        image = tmp_path / "img7.png"
        image.write_bytes(b"\x89PNG fake")

        port = canned_server.server_address[1]
        remote = RemoteBackend(f"http://127.0.0.1:{port}")
        from_remote = remote.detect("img7", str(image), 640, 640)
        from_file = FileBackend(tmp_path / "dets").detect("img7", str(image), 640, 640)
        assert from_remote == from_file

    def test_non_200_raises(self, tmp_path, canned_server):
        _CannedDetectHandler.canned = {}
        _CannedDetectHandler.status_code = 500
        image = tmp_path / "img.png"
        image.write_bytes(b"x")
        port = canned_server.server_address[1]
        remote = RemoteBackend(f"http://127.0.0.1:{port}")
        with pytest.raises(DetectorBackendError):
            remote.detect("img", str(image), 64, 64)

    def test_missing_image_ref_raises(self):
        remote = RemoteBackend("http://127.0.0.1:1")
        with pytest.raises(DetectorBackendError):
            remote.detect("img", None, 64, 64)
