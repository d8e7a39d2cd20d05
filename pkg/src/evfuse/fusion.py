"""Detection-level fusion between the event camera and the RGB camera.

Three strategies: alpha blending of the raw images (early fusion), a union
of per-sensor detections with paired boxes merged (simple late fusion), and
a tracked variant that only emits high-confidence RGB objects or objects
whose track has ever been supported by event evidence (spatiotemporal late
fusion).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .calibration import solve_assignment
from .core import (Affine2D, Detection, SOURCE_FUSED, apply_affine,
                   check_same_shape, transform_detection)
from .tracking import SortConfig, SortTracker

PROV_RGB_ONLY = "rgb_only"
PROV_EB_ONLY = "eb_only"
PROV_BOTH = "both"


@dataclass(frozen=True)
class FusionConfig:
    blend_alpha: float = 0.5
    pair_alpha: float = 0.4
    distance_gate: float = 50.0
    stlf_confidence: float = 0.77
    motion_overlap_min: float = 0.1

    def __post_init__(self):
        for name in ("blend_alpha", "pair_alpha"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.distance_gate <= 0:
            raise ValueError("distance_gate must be positive")
        if not 0.0 < self.stlf_confidence < 1.0:
            raise ValueError("stlf_confidence must lie in (0, 1)")
        if not 0.0 <= self.motion_overlap_min <= 1.0:
            raise ValueError("motion_overlap_min must lie in [0, 1]")


@dataclass(frozen=True)
class FusedObject:
    detection: Detection
    provenance: str
    track_id: int | None = None
    trusted: bool = False


@dataclass
class StlfState:
    """Per-stream fusion state: the tracker plus the set of track IDs that
    ever received event-camera support."""

    tracker: SortTracker = field(default_factory=lambda: SortTracker(SortConfig()))
    trusted_ids: set[int] = field(default_factory=set)


def warp_event_image(eb_image: np.ndarray, transform: Affine2D,
                     rgb_shape: tuple[int, int], fill: int = 128) -> np.ndarray:
    """Resample an event-camera image into the RGB pixel frame
    (nearest neighbor through the inverse transform)."""
    h, w = rgb_shape
    inv = transform.inverse()
    ys, xs = np.mgrid[0:h, 0:w]
    pts = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)
    src = apply_affine(inv, pts)
    sx = np.rint(src[:, 0]).astype(np.int64)
    sy = np.rint(src[:, 1]).astype(np.int64)
    eh, ew = eb_image.shape[:2]
    valid = (sx >= 0) & (sx < ew) & (sy >= 0) & (sy < eh)
    out = np.full((h * w,), fill, dtype=eb_image.dtype)
    out[valid] = eb_image[sy[valid], sx[valid]]
    return out.reshape(h, w)


def blend_early(i_eb: np.ndarray, i_rgb: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """Per-channel blend (1 - alpha) * event image + alpha * RGB image."""
    check_same_shape(i_eb, i_rgb)
    if i_eb.shape != i_rgb.shape:
        raise ValueError(f"channel mismatch: {i_eb.shape} vs {i_rgb.shape}")
    blended = (1.0 - alpha) * i_eb.astype(np.float64) + alpha * i_rgb.astype(np.float64)
    return np.clip(np.rint(blended), 0, 255).astype(np.uint8)


def fuse_pair(rgb: Detection, eb: Detection, alpha: float = 0.4) -> FusedObject:
    """Merge one RGB/event detection pair: class from RGB, position and size
    blended with weight alpha toward the event box, confidence = max."""
    det = Detection(
        class_id=rgb.class_id,
        cx=(1.0 - alpha) * rgb.cx + alpha * eb.cx,
        cy=(1.0 - alpha) * rgb.cy + alpha * eb.cy,
        w=(1.0 - alpha) * rgb.w + alpha * eb.w,
        h=(1.0 - alpha) * rgb.h + alpha * eb.h,
        confidence=max(rgb.confidence, eb.confidence),
        source=SOURCE_FUSED,
        moving=rgb.moving or eb.moving,
    )
    return FusedObject(detection=det, provenance=PROV_BOTH)


def associate_detections(rgb_moving: Sequence[Detection], eb: Sequence[Detection],
                         distance_gate: float = 50.0
                         ) -> tuple[list[tuple[Detection, Detection]],
                                    list[Detection], list[Detection]]:
    """One-to-one center-distance assignment between moving RGB detections
    and event detections; pairs farther apart than the gate are rejected."""
    rgb_list = list(rgb_moving)
    eb_list = list(eb)
    if not rgb_list or not eb_list:
        return [], rgb_list, eb_list
    cost = np.zeros((len(rgb_list), len(eb_list)))
    for i, r in enumerate(rgb_list):
        for j, e in enumerate(eb_list):
            cost[i, j] = math.hypot(r.cx - e.cx, r.cy - e.cy)
    pairs = []
    matched_rgb: set[int] = set()
    matched_eb: set[int] = set()
    for i, j in solve_assignment(cost):
        if cost[i, j] > distance_gate:
            continue
        pairs.append((rgb_list[i], eb_list[j]))
        matched_rgb.add(i)
        matched_eb.add(j)
    unmatched_rgb = [d for i, d in enumerate(rgb_list) if i not in matched_rgb]
    unmatched_eb = [d for j, d in enumerate(eb_list) if j not in matched_eb]
    return pairs, unmatched_rgb, unmatched_eb


def detection_motion_overlap(det: Detection, motion: np.ndarray) -> float:
    """Fraction of the box area covered by motion-mask foreground."""
    h, w = motion.shape
    r = det.rect()
    x0 = max(int(math.floor(r.x0)), 0)
    y0 = max(int(math.floor(r.y0)), 0)
    x1 = min(int(math.ceil(r.x1)), w)
    y1 = min(int(math.ceil(r.y1)), h)
    if x1 <= x0 or y1 <= y0:
        return 0.0
    patch = motion[y0:y1, x0:x1]
    return float(np.count_nonzero(patch)) / patch.size


def simple_late_fusion(rgb: Sequence[Detection], eb: Sequence[Detection],
                       motion: np.ndarray, cfg: FusionConfig) -> list[FusedObject]:
    """Union fusion: moving RGB detections are paired with event detections,
    pairs are merged, and every unmatched detection of either sensor passes
    through so static objects are preserved."""
    moving_rgb: list[Detection] = []
    static_rgb: list[Detection] = []
    for det in rgb:
        overlap = detection_motion_overlap(det, motion)
        if overlap >= cfg.motion_overlap_min:
            moving_rgb.append(replace(det, moving=True))
        else:
            static_rgb.append(replace(det, moving=False))
    pairs, unmatched_rgb, unmatched_eb = associate_detections(
        moving_rgb, eb, cfg.distance_gate)
    out = [fuse_pair(r, e, cfg.pair_alpha) for r, e in pairs]
    out.extend(FusedObject(detection=d, provenance=PROV_RGB_ONLY) for d in unmatched_rgb)
    out.extend(FusedObject(detection=d, provenance=PROV_RGB_ONLY) for d in static_rgb)
    out.extend(FusedObject(detection=d, provenance=PROV_EB_ONLY) for d in unmatched_eb)
    return out


def spatiotemporal_late_fusion(state: StlfState, rgb: Sequence[Detection],
                               eb: Sequence[Detection], motion: np.ndarray,
                               cfg: FusionConfig) -> list[FusedObject]:
    """Tracked fusion: candidates come from simple late fusion, every
    candidate updates the tracker, and a candidate is emitted only when its
    confidence clears the threshold or its track ever had event support."""
    candidates = simple_late_fusion(rgb, eb, motion, cfg)
    matches = state.tracker.update([c.detection for c in candidates])
    track_by_det = {id(det): track for track, det in matches if det is not None}

    resolved: list[FusedObject] = []
    for cand in candidates:
        track = track_by_det.get(id(cand.detection))
        track_id = track.id if track is not None else None
        if track_id is not None and cand.provenance in (PROV_BOTH, PROV_EB_ONLY):
            state.trusted_ids.add(track_id)
        resolved.append(replace(cand, track_id=track_id))

    out = []
    for cand in resolved:
        trusted = cand.track_id is not None and cand.track_id in state.trusted_ids
        cand = replace(cand, trusted=trusted)
        if trusted or cand.detection.confidence > cfg.stlf_confidence:
            out.append(cand)
    return out


def transform_eb_detections(dets: Sequence[Detection], calib: Affine2D) -> list[Detection]:
    """Map event-camera detections into the RGB pixel frame through the
    calibration transform."""
    return [transform_detection(d, calib) for d in dets]
