"""Command-line pipeline: grid/sample -> acquire -> detect -> score -> report.

Stages hand off through files (plan JSONL, manifest JSONL, detection JSON
directory, score CSVs) so each is independently re-runnable. Exit codes:
0 success, 1 validation/usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from tagmap import __version__
from tagmap.acquisition import (
    Manifest,
    RateLimiter,
    acquire,
    load_manifest,
    save_manifest,
    year_histogram,
)
from tagmap.config import PipelineConfig
from tagmap.detection import (
    DetectionSet,
    FileBackend,
    RemoteBackend,
    SyntheticBackend,
    detection_set_from_json,
    save_detection_set,
)
from tagmap.errors import ConfigError, InvalidKError, TagmapError
from tagmap.evaluation import (
    evaluate,
    load_ground_truth_dir,
    save_ap_json,
    save_pr_points_csv,
)
from tagmap.geo import GeoPoint, RegionPolygon, load_regions
from tagmap.metrics import location_level, score_by_region
from tagmap.providers import DirectoryProvider, HttpProvider, SimulatedProvider
from tagmap.report import (
    atomic_write_text,
    bias_variance_csv,
    emit_error_chart,
    levels_csv,
    load_levels_csv,
    load_region_scores_csv,
    region_scores_csv,
    write_report_bundle,
)
from tagmap.sampling import (
    GridSpec,
    build_systematic_grid,
    coverage_filter,
    load_plan,
    sample_random,
    save_plan,
)
from tagmap.simulate import bias_variance_report, random_field


class _Parser(argparse.ArgumentParser):
    # Validation problems exit 1; argparse's default of 2 is reserved for
    # runtime failures.
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _pick_region(regions: list[RegionPolygon], region_id: str | None) -> RegionPolygon:
    if region_id is not None:
        for region in regions:
            if region.region_id == region_id:
                return region
        raise ConfigError(f"region_id {region_id!r} not found in region file")
    if len(regions) > 1:
        raise ConfigError(
            "region file has multiple features; choose one with --region-id"
        )
    return regions[0]


def _anchor(cfg: PipelineConfig, args) -> GeoPoint | None:
    lat = cfg.get(args, "anchor_lat")
    lon = cfg.get(args, "anchor_lon")
    if (lat is None) != (lon is None):
        raise ConfigError("anchor needs both --anchor-lat and --anchor-lon")
    if lat is None:
        return None
    return GeoPoint(float(lat), float(lon))


def cmd_grid(args, cfg: PipelineConfig) -> int:
    regions = load_regions(cfg.require(args, "region"))
    region = _pick_region(regions, cfg.get(args, "region_id"))
    spec = GridSpec(
        spacing_m=float(cfg.get(args, "spacing_m", 102.0)), anchor=_anchor(cfg, args)
    )
    plan = build_systematic_grid(region, spec)
    out = cfg.require(args, "out")
    save_plan(plan, out)
    print(f"grid: {len(plan.points)} points at {spec.spacing_m} m -> {out}")
    return 0


def cmd_sample(args, cfg: PipelineConfig) -> int:
    regions = load_regions(cfg.require(args, "region"))
    region = _pick_region(regions, cfg.get(args, "region_id"))
    spec = GridSpec(
        strategy="random",
        n_random=int(cfg.require(args, "n_random")),
        seed=int(cfg.get(args, "seed", 0)),
    )
    plan = sample_random(region, spec)
    out = cfg.require(args, "out")
    save_plan(plan, out)
    print(f"sample: {len(plan.points)} random points -> {out}")
    return 0


def _make_provider(cfg: PipelineConfig, args):
    kind = cfg.get(args, "provider", "simulated")
    images_dir = cfg.get(args, "images_dir", "images")
    if kind == "simulated":
        return SimulatedProvider(images_dir, seed=int(cfg.get(args, "provider_seed", 0)))
    if kind == "directory":
        return DirectoryProvider(cfg.require(args, "corpus_dir"))
    if kind == "http":
        return HttpProvider(cfg.require(args, "provider_url"), images_dir)
    raise ConfigError(f"unknown provider {kind!r}")


def cmd_acquire(args, cfg: PipelineConfig) -> int:
    plan = load_plan(cfg.require(args, "plan"))
    manifest_path = Path(cfg.require(args, "manifest"))
    manifest = load_manifest(manifest_path) if manifest_path.exists() else Manifest()
    provider = _make_provider(cfg, args)
    rate = cfg.get(args, "rate_per_s")
    if rate is None and cfg.get(args, "provider", "simulated") == "http":
        rate = 10.0  # default crawl etiquette against real services
    limiter = RateLimiter(float(rate)) if rate is not None else None
    before = len(manifest)
    acquire(
        plan,
        int(cfg.get(args, "k", 4)),
        provider,
        manifest,
        workers=int(cfg.get(args, "workers", 8)),
        rate_limiter=limiter,
    )
    save_manifest(manifest, manifest_path)
    print(f"acquire: {len(manifest) - before} new records, {len(manifest)} total -> {manifest_path}")
    return 0


def _make_backend(cfg: PipelineConfig, args):
    kind = cfg.get(args, "detector", "synthetic")
    if kind == "synthetic":
        return SyntheticBackend(seed=int(cfg.get(args, "detector_seed", 0)))
    if kind == "file":
        return FileBackend(cfg.require(args, "detections"))
    if kind == "remote":
        return RemoteBackend(cfg.require(args, "detector_url"))
    raise ConfigError(f"unknown detector {kind!r}")


def cmd_detect(args, cfg: PipelineConfig) -> int:
    manifest = load_manifest(cfg.require(args, "manifest"))
    backend = _make_backend(cfg, args)
    out_dir = cfg.require(args, "out_dir")
    count = 0
    for record in manifest:
        if record.status != "ok":
            continue
        dset = backend.detect(
            record.image_id, record.storage_ref, record.width_px, record.height_px
        )
        save_detection_set(dset, out_dir)
        count += 1
    print(f"detect: {count} images -> {out_dir}")
    return 0


def cmd_score(args, cfg: PipelineConfig) -> int:
    plan = load_plan(cfg.require(args, "plan"))
    manifest = load_manifest(cfg.require(args, "manifest"))
    regions = load_regions(cfg.require(args, "region"))
    backend = FileBackend(cfg.require(args, "detections"))
    mode = cfg.get(args, "mode", "fraction")
    dedup = cfg.get(args, "dedup", "union")
    tau = float(cfg.get(args, "tau", 0.5))

    surviving = coverage_filter(plan, manifest)
    records_by_point: dict[str, list] = {}
    for record in manifest:
        if record.status == "ok":
            records_by_point.setdefault(record.point_id, []).append(record)
    dims = {r.image_id: (r.width_px, r.height_px) for r in manifest}

    levels = []
    for point in surviving.points:
        records = sorted(records_by_point[point.point_id], key=lambda r: r.heading_deg)
        sets = [
            backend.detect(r.image_id, r.storage_ref, r.width_px, r.height_px)
            for r in records
        ]
        levels.append(
            location_level(point.point_id, sets, mode=mode, tau=tau, dedup=dedup, dims=dims)
        )
    scores, dropped = score_by_region(regions, surviving, levels)

    out_dir = Path(cfg.require(args, "out_dir"))
    atomic_write_text(out_dir / "levels.csv", levels_csv(levels))
    atomic_write_text(out_dir / "region_scores.csv", region_scores_csv(scores))
    print(
        f"score: {len(levels)} locations ({len(plan.points) - len(surviving.points)} "
        f"filtered by coverage, {dropped} outside every region) -> {out_dir}"
    )
    return 0


def cmd_eval(args, cfg: PipelineConfig) -> int:
    det_dir = Path(cfg.require(args, "detections"))
    dets_by_image: dict[str, DetectionSet] = {}
    for path in sorted(det_dir.glob("*.json")):
        dset = detection_set_from_json(json.loads(path.read_text(encoding="utf-8")))
        dets_by_image[dset.image_id] = dset
    gts_by_image = load_ground_truth_dir(cfg.require(args, "ground_truth"))

    manifest_path = cfg.get(args, "manifest")
    if manifest_path is not None:
        dims = {
            r.image_id: (r.width_px, r.height_px) for r in load_manifest(manifest_path)
        }
    else:
        width = cfg.get(args, "width")
        height = cfg.get(args, "height")
        if width is None or height is None:
            raise ConfigError("eval needs --manifest or both --width and --height")
        every = set(dets_by_image) | set(gts_by_image)
        dims = {image_id: (int(width), int(height)) for image_id in every}

    result, points = evaluate(
        dets_by_image, gts_by_image, dims, float(cfg.get(args, "iou_thr", 0.5))
    )
    out_dir = Path(cfg.require(args, "out_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    save_pr_points_csv(points, out_dir / "pr_points.csv")
    save_ap_json(result, out_dir / "ap.json")
    print(f"eval: ap={result.ap:.4f} over {result.n_gt} truths, {result.n_det} detections")
    return 0


def _parse_number_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def cmd_simulate(args, cfg: PipelineConfig) -> int:
    regions = load_regions(cfg.require(args, "region"))
    region = _pick_region(regions, cfg.get(args, "region_id"))
    field = random_field(
        int(cfg.get(args, "field_seed", 0)), region, n_bumps=int(cfg.get(args, "bumps", 2))
    )
    spacings = cfg.get(args, "systematic_spacings", [])
    ns = cfg.get(args, "random_ns", [])
    if isinstance(spacings, str):
        spacings = _parse_number_list(spacings)
    if isinstance(ns, str):
        ns = _parse_number_list(ns)
    configs = [("systematic", s) for s in spacings] + [("random", n) for n in ns]
    if not configs:
        raise ConfigError("simulate needs --systematic-spacings and/or --random-ns")
    base_seed = int(cfg.get(args, "seed", 0))
    seeds = [base_seed + i for i in range(int(cfg.get(args, "runs", 30)))]
    rows = bias_variance_report(field, region, configs, seeds)
    out_dir = Path(cfg.require(args, "out_dir"))
    atomic_write_text(out_dir / "bias_variance.csv", bias_variance_csv(rows))
    atomic_write_text(out_dir / "error_chart.svg", emit_error_chart(rows))
    print(f"simulate: {len(rows)} configs -> {out_dir}")
    return 0


def cmd_report(args, cfg: PipelineConfig) -> int:
    regions = load_regions(cfg.require(args, "region"))
    scores_dir = Path(cfg.require(args, "scores_dir"))
    levels = load_levels_csv(scores_dir / "levels.csv")
    scores = load_region_scores_csv(scores_dir / "region_scores.csv")
    manifest_path = cfg.require(args, "manifest")
    hist = year_histogram(load_manifest(manifest_path))
    out_dir = cfg.require(args, "out_dir")
    effective = {
        "command": "report",
        "region": str(cfg.require(args, "region")),
        "scores_dir": str(scores_dir),
        "manifest": str(manifest_path),
        "out_dir": str(out_dir),
    }
    bundle = write_report_bundle(
        out_dir, scores, regions, levels, hist, effective, manifest_path
    )
    print(f"report: bundle -> {bundle.scores_geojson.parent}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="tagmap", description=__doc__)
    parser.add_argument("--version", action="version", version=f"tagmap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: _Parser) -> None:
        p.add_argument("--config", help="pipeline config JSON file")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            metavar="KEY=VALUE",
            help="override one config key (repeatable)",
        )

    p = sub.add_parser("grid", help="build a systematic sample plan")
    p.add_argument("--region")
    p.add_argument("--region-id", dest="region_id")
    p.add_argument("--spacing-m", dest="spacing_m", type=float)
    p.add_argument("--anchor-lat", dest="anchor_lat", type=float)
    p.add_argument("--anchor-lon", dest="anchor_lon", type=float)
    p.add_argument("--out")
    common(p)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("sample", help="build a uniform random sample plan")
    p.add_argument("--region")
    p.add_argument("--region-id", dest="region_id")
    p.add_argument("--n", dest="n_random", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("acquire", help="fetch imagery for a plan into a manifest")
    p.add_argument("--plan")
    p.add_argument("--k", type=int)
    p.add_argument("--provider", choices=["simulated", "directory", "http"])
    p.add_argument("--provider-seed", dest="provider_seed", type=int)
    p.add_argument("--provider-url", dest="provider_url")
    p.add_argument("--corpus-dir", dest="corpus_dir")
    p.add_argument("--images-dir", dest="images_dir")
    p.add_argument("--manifest")
    p.add_argument("--rate-per-s", dest="rate_per_s", type=float)
    p.add_argument("--workers", type=int)
    common(p)
    p.set_defaults(func=cmd_acquire)

    p = sub.add_parser("detect", help="run a detector backend over the manifest")
    p.add_argument("--manifest")
    p.add_argument("--detector", choices=["synthetic", "file", "remote"])
    p.add_argument("--detector-seed", dest="detector_seed", type=int)
    p.add_argument("--detector-url", dest="detector_url")
    p.add_argument("--detections")
    p.add_argument("--out-dir", dest="out_dir")
    common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("score", help="compute location levels and region scores")
    p.add_argument("--plan")
    p.add_argument("--manifest")
    p.add_argument("--region")
    p.add_argument("--detections")
    p.add_argument("--mode", choices=["fraction", "raw_px"])
    p.add_argument("--dedup", choices=["union", "raw_sum"])
    p.add_argument("--tau", type=float)
    p.add_argument("--out-dir", dest="out_dir")
    common(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="VOC-2007 average precision against ground truth")
    p.add_argument("--detections")
    p.add_argument("--ground-truth", dest="ground_truth")
    p.add_argument("--manifest")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--iou-thr", dest="iou_thr", type=float)
    p.add_argument("--out-dir", dest="out_dir")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="sampling-strategy bias/variance experiment")
    p.add_argument("--region")
    p.add_argument("--region-id", dest="region_id")
    p.add_argument("--field-seed", dest="field_seed", type=int)
    p.add_argument("--bumps", type=int)
    p.add_argument("--systematic-spacings", dest="systematic_spacings")
    p.add_argument("--random-ns", dest="random_ns")
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="emit the map-ready report bundle")
    p.add_argument("--region")
    p.add_argument("--scores-dir", dest="scores_dir")
    p.add_argument("--manifest")
    p.add_argument("--out-dir", dest="out_dir")
    common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = PipelineConfig.load(getattr(args, "config", None), getattr(args, "overrides", None))
        return args.func(args, cfg)
    except (ConfigError, InvalidKError, ValueError) as exc:
        print(f"tagmap: error: {exc}", file=sys.stderr)
        return 1
    except (TagmapError, OSError) as exc:
        print(f"tagmap: failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
