from __future__ import annotations

import json
import math
from pathlib import Path

from tagmap.cli import main
from tagmap.detection import FileBackend
from tagmap.geo import GeoPoint
from tagmap.metrics import location_level, region_score
from tagmap.acquisition import load_manifest
from tagmap.sampling import coverage_filter, load_plan

from conftest import rect_region, write_region_geojson

# 930 m per side: floor(930/102)+1 = 10 rows and columns, 100 grid points.
DEMO_SIDE_M = 930.0


def demo_region(region_id="demo", center=GeoPoint(-23.5, -46.6)):
    return rect_region(region_id, center, DEMO_SIDE_M, DEMO_SIDE_M)


def run_demo_pipeline(workdir: Path, monkeypatch, points_expected=100) -> dict:
    """grid -> acquire -> detect -> score -> report with relative paths."""
    monkeypatch.chdir(workdir)
    write_region_geojson(Path("region.geojson"), demo_region())
    assert main(["grid", "--region", "region.geojson", "--spacing-m", "102", "--out", "plan.jsonl"]) == 0
    plan = load_plan("plan.jsonl")
    assert len(plan.points) == points_expected
    assert (
        main(
            [
                "acquire",
                "--plan", "plan.jsonl",
                "--k", "4",
                "--provider", "simulated",
                "--provider-seed", "7",
                "--images-dir", "images",
                "--manifest", "manifest.jsonl",
            ]
        )
        == 0
    )
    assert (
        main(
            [
                "detect",
                "--manifest", "manifest.jsonl",
                "--detector", "synthetic",
                "--detector-seed", "13",
                "--out-dir", "detections",
            ]
        )
        == 0
    )
    assert (
        main(
            [
                "score",
                "--plan", "plan.jsonl",
                "--manifest", "manifest.jsonl",
                "--region", "region.geojson",
                "--detections", "detections",
                "--out-dir", "scores",
            ]
        )
        == 0
    )
    assert (
        main(
            [
                "report",
                "--region", "region.geojson",
                "--scores-dir", "scores",
                "--manifest", "manifest.jsonl",
                "--out-dir", "report",
            ]
        )
        == 0
    )
    out = {}
    for name in (
        "report/region_scores.geojson",
        "report/levels.csv",
        "report/year_histogram.csv",
        "report/choropleth.svg",
        "report/run_metadata.json",
    ):
        out[name] = Path(name).read_bytes()
    return out


class TestGridCommand:
    def test_writes_plan_with_spacing_header(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        write_region_geojson(Path("r.geojson"), demo_region())
        assert main(["grid", "--region", "r.geojson", "--spacing-m", "102", "--out", "plan.jsonl"]) == 0
        header = json.loads(Path("plan.jsonl").read_text().splitlines()[0])
        assert header["spacing_m"] == 102.0

    def test_missing_region_flag_is_validation_error(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert main(["grid", "--out", "plan.jsonl"]) == 1

    def test_unknown_flag_exits_one(self):
        assert main(["grid", "--no-such-flag"]) == 1

    def test_unknown_subcommand_exits_one(self):
        assert main(["frobnicate"]) == 1

    def test_multi_feature_file_needs_region_id(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        write_region_geojson(
            Path("r.geojson"),
            demo_region("a"),
            demo_region("b", center=GeoPoint(-23.4, -46.6)),
        )
        assert main(["grid", "--region", "r.geojson", "--out", "p.jsonl"]) == 1
        assert main(["grid", "--region", "r.geojson", "--region-id", "b", "--out", "p.jsonl"]) == 0


class TestConfigHandling:
    def test_config_file_supplies_values(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        write_region_geojson(Path("r.geojson"), demo_region())
        Path("cfg.json").write_text(json.dumps({"region": "r.geojson", "spacing_m": 102}))
        assert main(["grid", "--config", "cfg.json", "--out", "plan.jsonl"]) == 0

    def test_unknown_config_key_rejected(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        Path("cfg.json").write_text(json.dumps({"regoin": "typo.geojson"}))
        assert main(["grid", "--config", "cfg.json", "--out", "plan.jsonl"]) == 1

    def test_set_overrides_config_file_and_cli_wins(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        write_region_geojson(Path("r.geojson"), demo_region())
        Path("cfg.json").write_text(json.dumps({"region": "r.geojson", "spacing_m": 51}))
        assert (
            main(["grid", "--config", "cfg.json", "--set", "spacing_m=204", "--out", "p.jsonl"])
            == 0
        )
        assert json.loads(Path("p.jsonl").read_text().splitlines()[0])["spacing_m"] == 204.0
        assert (
            main(
                [
                    "grid",
                    "--config", "cfg.json",
                    "--set", "spacing_m=204",
                    "--spacing-m", "102",
                    "--out", "p2.jsonl",
                ]
            )
            == 0
        )
        assert json.loads(Path("p2.jsonl").read_text().splitlines()[0])["spacing_m"] == 102.0

    def test_malformed_set_rejected(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert main(["grid", "--set", "nonsense", "--out", "p.jsonl"]) == 1


class TestScoreCommand:
    def test_empty_detections_dir_all_levels_zero(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        write_region_geojson(Path("region.geojson"), demo_region())
        assert main(["grid", "--region", "region.geojson", "--spacing-m", "310", "--out", "plan.jsonl"]) == 0
        assert (
            main(
                [
                    "acquire",
                    "--plan", "plan.jsonl",
                    "--k", "2",
                    "--provider", "simulated",
                    "--images-dir", "images",
                    "--manifest", "manifest.jsonl",
                ]
            )
            == 0
        )
        Path("empty_dets").mkdir()
        assert (
            main(
                [
                    "score",
                    "--plan", "plan.jsonl",
                    "--manifest", "manifest.jsonl",
                    "--region", "region.geojson",
                    "--detections", "empty_dets",
                    "--out-dir", "scores",
                ]
            )
            == 0
        )
        rows = Path("scores/levels.csv").read_text().splitlines()[1:]
        assert rows
        assert all(float(row.split(",")[2]) == 0.0 for row in rows)


class TestSampleCommand:
    def test_random_plan_deterministic(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        write_region_geojson(Path("r.geojson"), demo_region())
        assert main(["sample", "--region", "r.geojson", "--n", "40", "--seed", "9", "--out", "a.jsonl"]) == 0
        assert main(["sample", "--region", "r.geojson", "--n", "40", "--seed", "9", "--out", "b.jsonl"]) == 0
        assert Path("a.jsonl").read_bytes() == Path("b.jsonl").read_bytes()


class TestEvalCommand:
    def test_eval_against_synthetic_truth(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        from tagmap.detection import SyntheticBackend, save_detection_set

        backend = SyntheticBackend(seed=3)
        Path("gt").mkdir()
        for i in range(6):
            image_id = f"img{i}"
            dset = backend.detect(image_id, None, 256, 256)
            save_detection_set(dset, "dets")
            gt_doc = {
                "image_id": image_id,
                "regions": [
                    {"polygon": [[x, y] for x, y in poly]}
                    for poly in backend.ground_truth_polygons(image_id, 256, 256)
                ],
            }
            Path(f"gt/{image_id}.json").write_text(json.dumps(gt_doc))
        assert (
            main(
                [
                    "eval",
                    "--detections", "dets",
                    "--ground-truth", "gt",
                    "--width", "256",
                    "--height", "256",
                    "--out-dir", "eval_out",
                ]
            )
            == 0
        )
        result = json.loads(Path("eval_out/ap.json").read_text())
        assert result["ap"] == 1.0
        assert Path("eval_out/pr_points.csv").exists()

    def test_eval_needs_dims_source(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        Path("dets").mkdir()
        Path("gt").mkdir()
        assert main(["eval", "--detections", "dets", "--ground-truth", "gt", "--out-dir", "o"]) == 1


class TestSimulateCommand:
    def test_writes_csv_and_chart(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        write_region_geojson(Path("r.geojson"), rect_region("sim", GeoPoint(-23.5, -46.6), 2000.0, 2000.0))
        assert (
            main(
                [
                    "simulate",
                    "--region", "r.geojson",
                    "--field-seed", "7",
                    "--bumps", "2",
                    "--systematic-spacings", "400,200",
                    "--random-ns", "100",
                    "--runs", "5",
                    "--out-dir", "sim",
                ]
            )
            == 0
        )
        lines = Path("sim/bias_variance.csv").read_text().splitlines()
        assert len(lines) == 1 + 3
        assert Path("sim/error_chart.svg").read_text().startswith("<svg")


class TestDemoPipeline:
    def test_end_to_end_and_report_matches_metrics_oracle(self, tmp_path, monkeypatch):
        run_demo_pipeline(tmp_path, monkeypatch)
        # independent recomputation of the region score from stage outputs
        plan = load_plan(tmp_path / "plan.jsonl")
        manifest = load_manifest(tmp_path / "manifest.jsonl")
        surviving = coverage_filter(plan, manifest)
        backend = FileBackend(tmp_path / "detections")
        records = {}
        for r in manifest:
            if r.status == "ok":
                records.setdefault(r.point_id, []).append(r)
        dims = {r.image_id: (r.width_px, r.height_px) for r in manifest}
        levels = []
        for p in surviving.points:
            sets = [
                backend.detect(r.image_id, r.storage_ref, r.width_px, r.height_px)
                for r in sorted(records[p.point_id], key=lambda r: r.heading_deg)
            ]
            levels.append(location_level(p.point_id, sets, dims=dims))
        expected = region_score("demo", levels)
        doc = json.loads((tmp_path / "report/region_scores.geojson").read_text())
        props = doc["features"][0]["properties"]
        assert props["region_id"] == "demo"
        assert props["n"] == expected.n
        assert math.isclose(props["mean_level"], expected.mean_level, rel_tol=0, abs_tol=0)

    def test_rerun_is_byte_identical_except_timestamp(self, tmp_path, monkeypatch):
        run_a = tmp_path / "a"
        run_b = tmp_path / "b"
        run_a.mkdir()
        run_b.mkdir()
        outputs = []
        for run_dir in (run_a, run_b):
            monkeypatch.chdir(tmp_path)  # reset before chdir into run dir
            outputs.append(run_demo_pipeline(run_dir, monkeypatch))
        a, b = outputs
        for name in a:
            if name.endswith("run_metadata.json"):
                ma = json.loads(a[name])
                mb = json.loads(b[name])
                ma.pop("created_utc")
                mb.pop("created_utc")
                assert ma == mb
            else:
                assert a[name] == b[name], f"{name} differs between runs"
