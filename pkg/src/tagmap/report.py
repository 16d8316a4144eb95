"""Map-ready outputs: region-score GeoJSON, CSVs, SVG choropleth, run metadata.

Every file is written atomically (temp file + rename) and is byte-stable for
identical inputs; wall-clock time appears only in the run metadata's
timestamp field.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from tagmap import __version__
from tagmap.geo import RegionPolygon
from tagmap.metrics import LocationLevel, RegionScore, YearHistogram
from tagmap.simulate import ConfigSummary

# Choropleth fill-opacity scale endpoints.
OPACITY_LO = 0.1
OPACITY_HI = 0.95
FILL_COLOR = "#7b1fa2"

_SVG_W = 800
_SVG_H = 600
_MARGIN = 24
_LEGEND_H = 56


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _ring_coords(ring) -> list[list[float]]:
    return [[p.lon_deg, p.lat_deg] for p in ring]


def region_scores_geojson(
    scores: Sequence[RegionScore], regions: Sequence[RegionPolygon]
) -> str:
    """FeatureCollection with {region_id, n, mean_level} properties.

    Regions without a score are included with n=0 and mean_level=null so the
    map can show them as no-data instead of silently dropping them.
    """
    by_id = {s.region_id: s for s in scores}
    features = []
    for region in sorted(regions, key=lambda r: r.region_id):
        score = by_id.get(region.region_id)
        coordinates = [_ring_coords(region.exterior)] + [
            _ring_coords(h) for h in region.holes
        ]
        features.append(
            {
                "type": "Feature",
                "properties": {
                    "region_id": region.region_id,
                    "n": score.n if score else 0,
                    "mean_level": score.mean_level if score else None,
                },
                "geometry": {"type": "Polygon", "coordinates": coordinates},
            }
        )
    doc = {"type": "FeatureCollection", "features": features}
    return json.dumps(doc, sort_keys=True, indent=2)


def levels_csv(levels: Sequence[LocationLevel]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["point_id", "views_counted", "level"])
    for lv in sorted(levels, key=lambda l: l.point_id):
        writer.writerow([lv.point_id, lv.views_counted, repr(lv.level)])
    return buf.getvalue()


def region_scores_csv(scores: Sequence[RegionScore]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["region_id", "n", "mean_level"])
    for s in sorted(scores, key=lambda s: s.region_id):
        writer.writerow([s.region_id, s.n, repr(s.mean_level)])
    return buf.getvalue()


def load_levels_csv(path: str | Path) -> list[LocationLevel]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(
                LocationLevel(
                    point_id=row["point_id"],
                    views_counted=int(row["views_counted"]),
                    level=float(row["level"]),
                )
            )
    return out


def load_region_scores_csv(path: str | Path) -> list[RegionScore]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(
                RegionScore(
                    region_id=row["region_id"],
                    n=int(row["n"]),
                    mean_level=float(row["mean_level"]),
                )
            )
    return out


def year_histogram_csv(hist: YearHistogram) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["year", "count"])
    for year, count in hist.rows():
        writer.writerow([year, count])
    return buf.getvalue()


# ---- choropleth --------------------------------------------------------------


def _projector(regions: Sequence[RegionPolygon]):
    lats = [p.lat_deg for r in regions for p in r.exterior]
    lons = [p.lon_deg for r in regions for p in r.exterior]
    min_lat, max_lat = min(lats), max(lats)
    min_lon, max_lon = min(lons), max(lons)
    mid_lat = 0.5 * (min_lat + max_lat)
    # Local equirectangular: shrink longitude spans by cos(mid latitude).
    k = math.cos(math.radians(mid_lat))
    span_x = max((max_lon - min_lon) * k, 1e-12)
    span_y = max(max_lat - min_lat, 1e-12)
    inner_w = _SVG_W - 2 * _MARGIN
    inner_h = _SVG_H - 2 * _MARGIN - _LEGEND_H
    scale = min(inner_w / span_x, inner_h / span_y)

    def project(p) -> tuple[float, float]:
        x = _MARGIN + (p.lon_deg - min_lon) * k * scale
        y = _MARGIN + (max_lat - p.lat_deg) * scale
        return x, y

    return project


def _path_d(region: RegionPolygon, project) -> str:
    parts = []
    for ring in (region.exterior,) + region.holes:
        pts = [project(p) for p in ring[:-1]]
        d = "M " + " L ".join(f"{x:.2f},{y:.2f}" for x, y in pts) + " Z"
        parts.append(d)
    return " ".join(parts)


def emit_choropleth(
    scores: Sequence[RegionScore], regions: Sequence[RegionPolygon]
) -> str:
    """SVG choropleth: fill opacity linear in mean level, no-data hatched."""
    if not scores:
        raise ValueError("emit_choropleth needs at least one score")
    by_id = {s.region_id: s for s in scores}
    levels = [s.mean_level for s in scores]
    lo, hi = min(levels), max(levels)

    def opacity(level: float) -> float:
        if hi == lo:
            return OPACITY_HI
        t = (level - lo) / (hi - lo)
        return OPACITY_LO + t * (OPACITY_HI - OPACITY_LO)

    project = _projector(regions)
    out = []
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}">'
    )
    out.append(
        '<defs><pattern id="nodata" width="8" height="8" patternUnits="userSpaceOnUse" '
        'patternTransform="rotate(45)"><rect width="8" height="8" fill="#f4f4f4"/>'
        '<line x1="0" y1="0" x2="0" y2="8" stroke="#999999" stroke-width="2"/></pattern>'
        f'<linearGradient id="scale" x1="0" y1="0" x2="1" y2="0">'
        f'<stop offset="0" stop-color="{FILL_COLOR}" stop-opacity="{OPACITY_LO}"/>'
        f'<stop offset="1" stop-color="{FILL_COLOR}" stop-opacity="{OPACITY_HI}"/>'
        "</linearGradient></defs>"
    )
    out.append(f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="#ffffff"/>')
    for region in sorted(regions, key=lambda r: r.region_id):
        d = _path_d(region, project)
        score = by_id.get(region.region_id)
        if score is None:
            fill = 'fill="url(#nodata)"'
        else:
            fill = f'fill="{FILL_COLOR}" fill-opacity="{opacity(score.mean_level):.4f}"'
        out.append(
            f'<path d="{d}" {fill} fill-rule="evenodd" stroke="#333333" '
            f'stroke-width="1"><title>{region.region_id}</title></path>'
        )
    # legend
    legend_y = _SVG_H - _LEGEND_H
    bar_w = _SVG_W - 2 * _MARGIN
    out.append(
        f'<rect x="{_MARGIN}" y="{legend_y + 18}" width="{bar_w}" height="12" '
        'fill="url(#scale)" stroke="#333333" stroke-width="0.5"/>'
    )
    out.append(
        f'<text x="{_MARGIN}" y="{legend_y + 12}" font-family="sans-serif" '
        'font-size="12" fill="#333333">mean graffiti level</text>'
    )
    out.append(
        f'<text x="{_MARGIN}" y="{legend_y + 44}" font-family="sans-serif" '
        f'font-size="11" fill="#333333">{lo:.6g}</text>'
    )
    out.append(
        f'<text x="{_MARGIN + bar_w}" y="{legend_y + 44}" font-family="sans-serif" '
        f'font-size="11" fill="#333333" text-anchor="end">{hi:.6g}</text>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---- estimator-experiment outputs --------------------------------------------


def bias_variance_csv(rows: Sequence[ConfigSummary]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["strategy", "param", "n_runs", "mean_error", "std_error", "mean_abs_error"])
    for r in rows:
        writer.writerow(
            [r.strategy, repr(r.param), r.n_runs, repr(r.mean_error), repr(r.std_error), repr(r.mean_abs_error)]
        )
    return buf.getvalue()


def emit_error_chart(rows: Sequence[ConfigSummary]) -> str:
    """Absolute error per config as an SVG bar chart, one bar per row."""
    if not rows:
        raise ValueError("emit_error_chart needs at least one row")
    width, height, margin = 640, 360, 48
    inner_w = width - 2 * margin
    inner_h = height - 2 * margin
    peak = max(max(r.mean_abs_error for r in rows), 1e-12)
    bar_w = inner_w / len(rows)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{margin}" y="{margin - 16}" font-family="sans-serif" font-size="13" '
        'fill="#333333">mean absolute estimator error</text>',
    ]
    for idx, r in enumerate(rows):
        h = inner_h * r.mean_abs_error / peak
        x = margin + idx * bar_w
        y = margin + inner_h - h
        color = "#1565c0" if r.strategy == "systematic" else "#ef6c00"
        out.append(
            f'<rect x="{x + 2:.2f}" y="{y:.2f}" width="{bar_w - 4:.2f}" height="{h:.2f}" '
            f'fill="{color}"/>'
        )
        label = f"{r.strategy[:3]}:{r.param:g}"
        out.append(
            f'<text x="{x + bar_w / 2:.2f}" y="{margin + inner_h + 16}" '
            'font-family="sans-serif" font-size="10" fill="#333333" '
            f'text-anchor="middle">{label}</text>'
        )
    out.append(
        f'<line x1="{margin}" y1="{margin + inner_h}" x2="{margin + inner_w}" '
        f'y2="{margin + inner_h}" stroke="#333333" stroke-width="1"/>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---- bundle ------------------------------------------------------------------


@dataclass(frozen=True)
class ReportBundle:
    scores_geojson: Path
    levels_csv: Path
    year_histogram_csv: Path
    choropleth_svg: Path
    metadata_json: Path


def _sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run_metadata(config: dict, manifest_path: str | Path | None) -> dict:
    canonical = json.dumps(config, sort_keys=True)
    meta = {
        "tool_version": __version__,
        "config_hash": hashlib.sha256(canonical.encode("utf-8")).hexdigest(),
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "inputs": {},
    }
    if manifest_path is not None:
        meta["inputs"]["manifest"] = {
            "path": str(manifest_path),
            "sha256": _sha256_file(manifest_path),
        }
    return meta


def write_report_bundle(
    out_dir: str | Path,
    scores: Sequence[RegionScore],
    regions: Sequence[RegionPolygon],
    levels: Sequence[LocationLevel],
    hist: YearHistogram,
    config: dict,
    manifest_path: str | Path | None,
) -> ReportBundle:
    out_dir = Path(out_dir)
    bundle = ReportBundle(
        scores_geojson=out_dir / "region_scores.geojson",
        levels_csv=out_dir / "levels.csv",
        year_histogram_csv=out_dir / "year_histogram.csv",
        choropleth_svg=out_dir / "choropleth.svg",
        metadata_json=out_dir / "run_metadata.json",
    )
    atomic_write_text(bundle.scores_geojson, region_scores_geojson(scores, regions))
    atomic_write_text(bundle.levels_csv, levels_csv(levels))
    atomic_write_text(bundle.year_histogram_csv, year_histogram_csv(hist))
    atomic_write_text(bundle.choropleth_svg, emit_choropleth(scores, regions))
    atomic_write_text(
        bundle.metadata_json,
        json.dumps(run_metadata(config, manifest_path), sort_keys=True, indent=2),
    )
    return bundle
