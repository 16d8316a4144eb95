"""Detector quality: rasterized IoU, greedy matching, VOC-2007 11-point AP.

Matching follows the classic protocol: detections are processed in
descending confidence and each may claim at most one ground-truth region,
the unmatched one it overlaps best. The pooled precision/recall sweep over
all images feeds the 11-point interpolated average precision.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from tagmap.detection import DetectionSet, PixelVertex, union_mask

DEFAULT_IOU_THRESHOLD = 0.5


@dataclass(frozen=True)
class GroundTruthRegion:
    image_id: str
    polygon_px: tuple[PixelVertex, ...]

    def __post_init__(self) -> None:
        if len(self.polygon_px) < 3:
            raise ValueError("ground truth polygon needs at least 3 vertices")


@dataclass(frozen=True)
class PRPoint:
    recall: float
    precision: float
    threshold: float


@dataclass(frozen=True)
class APResult:
    ap: float
    n_gt: int
    n_det: int
    iou_threshold: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.ap <= 1.0:
            raise ValueError(f"ap {self.ap} outside [0, 1]")


def iou(
    a: tuple[PixelVertex, ...] | Sequence[PixelVertex],
    b: tuple[PixelVertex, ...] | Sequence[PixelVertex],
    width_px: int,
    height_px: int,
) -> float:
    """Rasterized intersection-over-union of two polygons; 0 when both empty."""
    mask_a = union_mask([tuple(a)], width_px, height_px)
    mask_b = union_mask([tuple(b)], width_px, height_px)
    union = int((mask_a | mask_b).sum())
    if union == 0:
        return 0.0
    return int((mask_a & mask_b).sum()) / union


def match_detections(
    dets: DetectionSet,
    gts: Sequence[GroundTruthRegion],
    width_px: int,
    height_px: int,
    iou_thr: float = DEFAULT_IOU_THRESHOLD,
) -> list[bool]:
    """TP/FP flags for one image's detections, aligned to input order.

    Greedy: in descending confidence (ties by input order), a detection is a
    TP iff its best-IoU still-unmatched ground truth reaches the threshold;
    that ground truth is then consumed.
    """
    det_masks = [
        union_mask([r.polygon_px], width_px, height_px) for r in dets.regions
    ]
    gt_masks = [union_mask([g.polygon_px], width_px, height_px) for g in gts]
    order = sorted(range(len(dets.regions)), key=lambda i: (-dets.regions[i].confidence, i))
    gt_taken = [False] * len(gts)
    flags = [False] * len(dets.regions)
    for i in order:
        best_iou = 0.0
        best_j = -1
        for j in range(len(gts)):
            if gt_taken[j]:
                continue
            union = int((det_masks[i] | gt_masks[j]).sum())
            if union == 0:
                continue
            value = int((det_masks[i] & gt_masks[j]).sum()) / union
            if value > best_iou:
                best_iou = value
                best_j = j
        if best_j >= 0 and best_iou >= iou_thr:
            flags[i] = True
            gt_taken[best_j] = True
    return flags


def pr_sweep(
    dets_by_image: Mapping[str, DetectionSet],
    gts_by_image: Mapping[str, Sequence[GroundTruthRegion]],
    dims_by_image: Mapping[str, tuple[int, int]],
    iou_thr: float = DEFAULT_IOU_THRESHOLD,
) -> tuple[list[PRPoint], int, int]:
    """Pooled PR curve over all images, in descending-confidence order.

    Returns (points, n_gt, n_det). Images present only in ``gts_by_image``
    still contribute to the ground-truth total.
    """
    n_gt = sum(len(v) for v in gts_by_image.values())
    pooled: list[tuple[float, str, int, bool]] = []
    for image_id in sorted(dets_by_image):
        dset = dets_by_image[image_id]
        if not dset.regions:
            continue
        width, height = dims_by_image[image_id]
        flags = match_detections(
            dset, list(gts_by_image.get(image_id, ())), width, height, iou_thr
        )
        for idx, region in enumerate(dset.regions):
            pooled.append((region.confidence, image_id, idx, flags[idx]))
    pooled.sort(key=lambda t: (-t[0], t[1], t[2]))

    points: list[PRPoint] = []
    tp = 0
    fp = 0
    for confidence, _, _, is_tp in pooled:
        if is_tp:
            tp += 1
        else:
            fp += 1
        recall = tp / n_gt if n_gt else 0.0
        points.append(PRPoint(recall=recall, precision=tp / (tp + fp), threshold=confidence))
    return points, n_gt, len(pooled)


def voc_ap_11pt(
    prpoints: Sequence[PRPoint],
    *,
    n_gt: int,
    n_det: int,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> APResult:
    """Average of interpolated precision at recalls 0.0, 0.1, ..., 1.0.

    Interpolated precision at r is the max precision among sweep points with
    recall >= r; an empty set contributes 0.
    """
    total = 0.0
    for i in range(11):
        r = i / 10.0
        best = 0.0
        for p in prpoints:
            if p.recall >= r - 1e-12 and p.precision > best:
                best = p.precision
        total += best
    return APResult(ap=total / 11.0, n_gt=n_gt, n_det=n_det, iou_threshold=iou_threshold)


def evaluate(
    dets_by_image: Mapping[str, DetectionSet],
    gts_by_image: Mapping[str, Sequence[GroundTruthRegion]],
    dims_by_image: Mapping[str, tuple[int, int]],
    iou_thr: float = DEFAULT_IOU_THRESHOLD,
) -> tuple[APResult, list[PRPoint]]:
    points, n_gt, n_det = pr_sweep(dets_by_image, gts_by_image, dims_by_image, iou_thr)
    result = voc_ap_11pt(points, n_gt=n_gt, n_det=n_det, iou_threshold=iou_thr)
    return result, points


# ---- ground truth files and result serialization ----------------------------


def load_ground_truth_file(path: str | Path) -> list[GroundTruthRegion]:
    """Same JSON schema as a DetectionSet file, confidence not required."""
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    image_id = obj["image_id"]
    return [
        GroundTruthRegion(
            image_id=image_id, polygon_px=tuple((v[0], v[1]) for v in r["polygon"])
        )
        for r in obj.get("regions", [])
    ]


def load_ground_truth_dir(directory: str | Path) -> dict[str, list[GroundTruthRegion]]:
    out: dict[str, list[GroundTruthRegion]] = {}
    for path in sorted(Path(directory).glob("*.json")):
        regions = load_ground_truth_file(path)
        image_id = json.loads(path.read_text(encoding="utf-8"))["image_id"]
        out[image_id] = regions
    return out


def save_pr_points_csv(points: Sequence[PRPoint], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["recall", "precision", "threshold"])
        for p in points:
            writer.writerow([repr(p.recall), repr(p.precision), repr(p.threshold)])


def save_ap_json(result: APResult, path: str | Path) -> None:
    obj = {
        "ap": result.ap,
        "n_gt": result.n_gt,
        "n_det": result.n_det,
        "iou_threshold": result.iou_threshold,
    }
    Path(path).write_text(json.dumps(obj, sort_keys=True), encoding="utf-8")
