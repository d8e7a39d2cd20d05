"""Detection metrics, reprojection reports, and pseudo-label generation."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .core import (Affine2D, Detection, N_CLASSES, SOURCE_EVENT, iou,
                   transform_detection)
from .rgbmotion import FlowVector, classify_flow_vectors


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = 0.45
    confidence_threshold: float = 0.3
    pseudo_label_confidence: float = 0.80
    # minimum visible fraction of a mapped box after clipping to the event
    # camera bounds; smaller boxes are dropped from the event label set
    pseudo_label_min_visible: float = 0.25

    def __post_init__(self):
        for name in ("iou_threshold", "confidence_threshold", "pseudo_label_confidence"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")


@dataclass
class ClassMetrics:
    class_id: int
    ap: float | None
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    n_gt: int
    # cumulative (recall, precision) points of the PR curve, one per detection
    pr_points: list[tuple[float, float]] = field(default_factory=list)


@dataclass
class EvalResult:
    per_class: list[ClassMetrics]
    mean_ap: float | None


def _average_precision(recalls: np.ndarray, precisions: np.ndarray) -> float:
    """Area under the PR curve with all-points interpolation: the precision
    at each recall level is the maximum precision at any recall >= it."""
    if recalls.size == 0:
        return 0.0
    envelope = np.maximum.accumulate(precisions[::-1])[::-1]
    prev_r = 0.0
    ap = 0.0
    for r, p in zip(recalls, envelope):
        ap += (r - prev_r) * p
        prev_r = r
    return float(ap)


def evaluate_detections(detections: Mapping[int, Sequence[Detection]],
                        ground_truth: Mapping[int, Sequence[Detection]],
                        cfg: EvalConfig) -> EvalResult:
    """Per-class AP, precision and recall with greedy confidence-ordered
    matching.

    Detections below the confidence threshold are discarded first. Within a
    frame, each detection greedily claims the unmatched same-class ground
    truth with the highest IoU at or above the IoU threshold. Classes absent
    from the ground truth are excluded from the mean AP and reported with
    ap=None.
    """
    frames = sorted(set(detections) | set(ground_truth))
    per_class: list[ClassMetrics] = []
    aps: list[float] = []
    for class_id in range(N_CLASSES):
        records = []  # (confidence, frame, slot) in stable input order
        gt_boxes: dict[int, list[Detection]] = {}
        for f in frames:
            gt_boxes[f] = [g for g in ground_truth.get(f, []) if g.class_id == class_id]
            for det in detections.get(f, []):
                if det.class_id != class_id:
                    continue
                if det.confidence < cfg.confidence_threshold:
                    continue
                records.append((det, f))
        n_gt = sum(len(v) for v in gt_boxes.values())
        order = sorted(range(len(records)),
                       key=lambda i: -records[i][0].confidence)
        matched: dict[int, set[int]] = {f: set() for f in frames}
        tp_flags = np.zeros(len(records), dtype=bool)
        for rank, i in enumerate(order):
            det, f = records[i]
            best_iou = 0.0
            best_gt = -1
            for gi, gt in enumerate(gt_boxes[f]):
                if gi in matched[f]:
                    continue
                overlap = iou(det.rect(), gt.rect())
                if overlap >= cfg.iou_threshold and overlap > best_iou:
                    best_iou = overlap
                    best_gt = gi
            if best_gt >= 0:
                matched[f].add(best_gt)
                tp_flags[rank] = True
        tp_cum = np.cumsum(tp_flags)
        fp_cum = np.cumsum(~tp_flags)
        n_det = len(records)
        if n_gt > 0 and n_det > 0:
            recalls = tp_cum / n_gt
            precisions = tp_cum / (tp_cum + fp_cum)
            ap = _average_precision(recalls, precisions)
            pr_points = list(zip(recalls.tolist(), precisions.tolist()))
        elif n_gt > 0:
            ap = 0.0
            pr_points = []
        else:
            ap = None
            pr_points = []
        tp = int(tp_cum[-1]) if n_det else 0
        fp = n_det - tp
        fn = n_gt - tp
        precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
        recall = tp / n_gt if n_gt > 0 else 0.0
        per_class.append(ClassMetrics(class_id=class_id, ap=ap, precision=precision,
                                      recall=recall, tp=tp, fp=fp, fn=fn, n_gt=n_gt,
                                      pr_points=pr_points))
        if ap is not None:
            aps.append(ap)
    mean_ap = float(np.mean(aps)) if aps else None
    return EvalResult(per_class=per_class, mean_ap=mean_ap)


def _point_in_box(x: float, y: float, det: Detection) -> bool:
    r = det.rect()
    return r.x0 <= x <= r.x1 and r.y0 <= y <= r.y1


def generate_pseudo_labels(rgb_dets: Sequence[Detection], calib: Affine2D,
                           flow: Sequence[FlowVector], cfg: EvalConfig,
                           eb_resolution: tuple[int, int],
                           flow_margin: float = 0.5
                           ) -> tuple[list[Detection], list[Detection]]:
    """Turn confident RGB detections into two label sets.

    The RGB set keeps every detection at or above the pseudo-label confidence
    threshold, each flagged as moving when at least one object-motion flow
    vector originates inside its box. The event set contains only the moving
    labels, mapped through the inverse calibration, clipped to the event
    sensor and dropped when mostly out of view.
    """
    inv = calib.inverse()
    _, object_vectors = classify_flow_vectors(flow, flow_margin)
    ew, eh = eb_resolution
    labels_rgb: list[Detection] = []
    labels_eb: list[Detection] = []
    for det in rgb_dets:
        if det.confidence < cfg.pseudo_label_confidence:
            continue
        moving = any(_point_in_box(v.origin[0], v.origin[1], det)
                     for v in object_vectors)
        rgb_label = replace(det, moving=moving)
        labels_rgb.append(rgb_label)
        if not moving:
            continue
        mapped = transform_detection(rgb_label, inv)
        r = mapped.rect()
        x0 = max(r.x0, 0.0)
        y0 = max(r.y0, 0.0)
        x1 = min(r.x1, float(ew))
        y1 = min(r.y1, float(eh))
        if x1 <= x0 or y1 <= y0:
            continue
        clipped_area = (x1 - x0) * (y1 - y0)
        if clipped_area < cfg.pseudo_label_min_visible * mapped.w * mapped.h:
            continue
        labels_eb.append(Detection(class_id=mapped.class_id,
                                   cx=(x0 + x1) / 2, cy=(y0 + y1) / 2,
                                   w=x1 - x0, h=y1 - y0,
                                   confidence=mapped.confidence,
                                   source=SOURCE_EVENT, moving=True))
    return labels_rgb, labels_eb


@dataclass
class ReprojectionSummary:
    minimum: float
    maximum: float
    mean: float
    rows: list[tuple[object, float]]


def summarize_reprojection(results: Sequence[tuple[object, float]]) -> ReprojectionSummary:
    """Descriptive statistics over per-frame reprojection errors."""
    rows = list(results)
    if not rows:
        raise ValueError("no reprojection results to summarize")
    errors = np.array([e for _, e in rows], dtype=np.float64)
    return ReprojectionSummary(minimum=float(errors.min()),
                               maximum=float(errors.max()),
                               mean=float(errors.mean()),
                               rows=rows)
