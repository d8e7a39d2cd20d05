"""RGB-side preprocessing: motion masks, sparse optical flow, edge extraction."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import cv2
import numpy as np
from scipy import ndimage

from .core import EdgeCloud, SOURCE_RGB, check_same_shape


@dataclass(frozen=True)
class MotionGateConfig:
    diff_threshold: int = 10
    flow_margin: float = 0.5
    motion_ratio: float = 0.2
    area_ratio: float = 0.002

    def __post_init__(self):
        if self.diff_threshold < 1:
            raise ValueError("diff_threshold must be >= 1")
        for name in ("motion_ratio", "area_ratio"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")


@dataclass(frozen=True)
class SegMask:
    """Instance segmentation mask at frame resolution."""

    mask: np.ndarray
    class_id: int


@dataclass(frozen=True)
class FlowVector:
    origin: tuple[float, float]
    displacement: tuple[float, float]

    @property
    def length(self) -> float:
        return math.hypot(*self.displacement)


def to_grayscale(frame: np.ndarray) -> np.ndarray:
    """Luma conversion 0.299 R + 0.587 G + 0.114 B, rounded to nearest.

    Computed exactly in integer arithmetic; halves round up.
    """
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) frame, got shape {frame.shape}")
    f = frame.astype(np.uint32)
    y = 299 * f[..., 0] + 587 * f[..., 1] + 114 * f[..., 2]
    return ((y + 500) // 1000).astype(np.uint8)


def three_frame_motion(i_t: np.ndarray, i_t1: np.ndarray, i_t2: np.ndarray,
                       threshold: int = 10) -> np.ndarray:
    """Motion where both consecutive absolute differences exceed the threshold."""
    check_same_shape(i_t, i_t1, i_t2)
    d1 = np.abs(i_t.astype(np.int16) - i_t1.astype(np.int16))
    d2 = np.abs(i_t1.astype(np.int16) - i_t2.astype(np.int16))
    return (((d1 > threshold) & (d2 > threshold)) * 255).astype(np.uint8)


def two_frame_motion(i_t: np.ndarray, i_t1: np.ndarray, threshold: int = 10) -> np.ndarray:
    """Motion where the absolute frame difference exceeds the threshold (strict)."""
    check_same_shape(i_t, i_t1)
    d = np.abs(i_t.astype(np.int16) - i_t1.astype(np.int16))
    return ((d > threshold) * 255).astype(np.uint8)


class BackgroundModel:
    """Per-pixel sample history for KNN-style background subtraction.

    A pixel is background when at least `min_matches` of its stored samples
    lie within `match_threshold` intensity levels of the current value.
    The model keeps the `history` most recent samples per pixel.
    """

    def __init__(self, width: int, height: int, history: int = 10,
                 match_threshold: int = 20, min_matches: int = 2):
        if history < 1 or min_matches < 1 or match_threshold < 0:
            raise ValueError("invalid background model parameters")
        self.width = width
        self.height = height
        self.history = history
        self.match_threshold = match_threshold
        self.min_matches = min_matches
        self._samples = np.zeros((history, height, width), dtype=np.uint8)
        self._filled = 0
        self._next = 0

    def foreground_mask(self, frame: np.ndarray) -> np.ndarray:
        """Classify the frame against the history, then absorb it as a sample."""
        if frame.shape != (self.height, self.width):
            raise ValueError(f"frame shape {frame.shape} does not match model "
                             f"({self.height}, {self.width})")
        if self._filled == 0:
            mask = np.full(frame.shape, 255, dtype=np.uint8)
        else:
            samples = self._samples[:self._filled]
            diff = np.maximum(samples, frame) - np.minimum(samples, frame)
            matches = (diff <= self.match_threshold).sum(axis=0)
            mask = ((matches < self.min_matches) * 255).astype(np.uint8)
        self._samples[self._next] = frame
        self._next = (self._next + 1) % self.history
        self._filled = min(self._filled + 1, self.history)
        return mask


def knn_background_mask(model: BackgroundModel, frame: np.ndarray) -> np.ndarray:
    return model.foreground_mask(frame)


def compute_sparse_flow(prev: np.ndarray, nxt: np.ndarray, max_corners: int = 200,
                        quality_level: float = 0.01, min_distance: float = 10.0,
                        pyramid_levels: int = 3, window_size: int = 21) -> list[FlowVector]:
    """Shi-Tomasi corners on `prev` tracked into `nxt` with pyramidal Lucas-Kanade.

    Lost tracks are dropped; a textureless image yields an empty list.
    """
    check_same_shape(prev, nxt)
    if max_corners < 1 or quality_level <= 0 or min_distance <= 0 \
            or pyramid_levels < 0 or window_size < 3:
        raise ValueError("invalid sparse flow parameters")
    corners = cv2.goodFeaturesToTrack(prev, maxCorners=max_corners,
                                      qualityLevel=quality_level,
                                      minDistance=min_distance)
    if corners is None or len(corners) == 0:
        return []
    tracked, status, _ = cv2.calcOpticalFlowPyrLK(
        prev, nxt, corners, None,
        winSize=(window_size, window_size), maxLevel=pyramid_levels,
        criteria=(cv2.TERM_CRITERIA_EPS | cv2.TERM_CRITERIA_COUNT, 30, 0.01))
    vectors = []
    for (p0, p1, ok) in zip(corners.reshape(-1, 2), tracked.reshape(-1, 2),
                            status.reshape(-1)):
        if not ok:
            continue
        vectors.append(FlowVector(origin=(float(p0[0]), float(p0[1])),
                                  displacement=(float(p1[0] - p0[0]), float(p1[1] - p0[1]))))
    return vectors


def classify_flow_vectors(vectors: Sequence[FlowVector],
                          margin: float = 0.5) -> tuple[list[FlowVector], list[FlowVector]]:
    """Partition vectors into (camera motion, object motion).

    A vector belongs to camera motion when its length is below the median
    length of all vectors plus the margin.
    """
    vecs = list(vectors)
    if not vecs:
        return [], []
    median = float(np.median([v.length for v in vecs]))
    camera = [v for v in vecs if v.length < median + margin]
    objects = [v for v in vecs if not v.length < median + margin]
    return camera, objects


def is_camera_shake(camera: Sequence[FlowVector], objects: Sequence[FlowVector],
                    min_object_fraction: float = 0.5,
                    min_mean_length: float = 2.0) -> bool:
    """Scene-health check: flag frames dominated by long non-median flow."""
    total = len(camera) + len(objects)
    if total == 0 or not objects:
        return False
    fraction = len(objects) / total
    mean_len = float(np.mean([v.length for v in objects]))
    return fraction > min_object_fraction and mean_len > min_mean_length


def gate_segmentation_masks(motion: np.ndarray, masks: Sequence[SegMask],
                            cfg: MotionGateConfig) -> np.ndarray:
    """Union of instance masks that are both sufficiently moving and large.

    A mask passes when motion pixels inside it exceed `motion_ratio` of its
    area and its area exceeds `area_ratio` of the image.
    """
    out = np.zeros_like(motion)
    total_px = motion.size
    motion_fg = motion > 0
    for seg in masks:
        check_same_shape(motion, seg.mask)
        seg_fg = seg.mask > 0
        d = int(np.count_nonzero(seg_fg))
        if d == 0:
            continue
        m = int(np.count_nonzero(motion_fg & seg_fg))
        if m / d > cfg.motion_ratio and d / total_px > cfg.area_ratio:
            out[seg_fg] = 255
    return out


def combine_motion(m_t: np.ndarray, m_yolo: np.ndarray) -> np.ndarray:
    check_same_shape(m_t, m_yolo)
    return np.maximum(m_t, m_yolo)


def _gaussian_kernel_1d(sigma: float, radius: int) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=np.float64)


def canny_edges(frame: np.ndarray, low: float = 50.0, high: float = 150.0) -> np.ndarray:
    """Canny detector: 5x5 Gaussian (sigma 1.4), Sobel, non-maximum suppression,
    double threshold, hysteresis over 8-connected components.

    Image borders replicate for smoothing and gradients; suppression treats
    out-of-image neighbors as zero magnitude. Ties along the positive gradient
    direction suppress, ties along the negative direction survive, which keeps
    ideal step edges one pixel wide.
    """
    if not low < high:
        raise ValueError("low threshold must be below high threshold")
    g = _gaussian_kernel_1d(1.4, 2)
    smooth = ndimage.correlate1d(frame.astype(np.float64), g, axis=0, mode="nearest")
    smooth = ndimage.correlate1d(smooth, g, axis=1, mode="nearest")
    gx = ndimage.correlate(smooth, _SOBEL_X, mode="nearest")
    gy = ndimage.correlate(smooth, _SOBEL_Y, mode="nearest")
    mag = np.hypot(gx, gy)
    angle = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)

    # quantize gradient direction to 4 sectors and compare along it
    sector = np.zeros(angle.shape, dtype=np.int8)
    sector[(angle >= 22.5) & (angle < 67.5)] = 1
    sector[(angle >= 67.5) & (angle < 112.5)] = 2
    sector[(angle >= 112.5) & (angle < 157.5)] = 3
    offsets = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}

    pad = np.pad(mag, 1, mode="constant", constant_values=0.0)
    h, w = mag.shape
    keep = np.zeros((h, w), dtype=bool)
    for s, (dy, dx) in offsets.items():
        fwd = pad[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        bwd = pad[1 - dy:1 - dy + h, 1 - dx:1 - dx + w]
        sel = sector == s
        keep[sel] = (mag[sel] > fwd[sel]) & (mag[sel] >= bwd[sel])
    nms = np.where(keep, mag, 0.0)

    strong = nms >= high
    candidate = nms >= low
    if not strong.any():
        return np.zeros(frame.shape, dtype=np.uint8)
    labels, _ = ndimage.label(candidate, structure=np.ones((3, 3), dtype=int))
    strong_labels = np.unique(labels[strong])
    strong_labels = strong_labels[strong_labels > 0]
    edge = np.isin(labels, strong_labels)
    return (edge * 255).astype(np.uint8)


def motion_edges(edges: np.ndarray, motion: np.ndarray) -> EdgeCloud:
    """Edges restricted to the motion mask, as an RGB edge cloud."""
    check_same_shape(edges, motion)
    combined = (edges > 0) & (motion > 0)
    ys, xs = np.nonzero(combined)
    points = np.stack([xs, ys], axis=1).astype(np.float64)
    return EdgeCloud(points, source=SOURCE_RGB)
