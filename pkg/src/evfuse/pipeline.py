"""Frame-ordered wiring of the preprocessing stages.

One processor instance owns the per-stream state (grayscale history, the
background model, the fusion tracker) and must be fed frames in order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .calibration import (CalibrationFailedError, CalibrationResult,
                          calibrate_frame)
from .config import PipelineConfig
from .core import Detection, EdgeCloud, Event
from .events import EventWindow, accumulate_frame, binarize_motion, \
    enhance_edges, filter_noise_events
from .fusion import (FusedObject, StlfState, simple_late_fusion,
                     spatiotemporal_late_fusion, transform_eb_detections)
from .rgbmotion import (BackgroundModel, canny_edges, classify_flow_vectors,
                        combine_motion, compute_sparse_flow,
                        gate_segmentation_masks, is_camera_shake,
                        motion_edges, three_frame_motion, to_grayscale,
                        two_frame_motion)
from .tracking import SortTracker


@dataclass
class RgbFrameResult:
    index: int
    gray: np.ndarray
    motion_calibration: np.ndarray | None  # needs 2 previous frames + warm KNN
    motion_fusion: np.ndarray  # available from the second frame on
    shake: bool


class RgbStreamProcessor:
    """Stateful RGB preprocessing: grayscale history, KNN background model,
    two motion-mask variants and the camera-shake gate."""

    def __init__(self, cfg: PipelineConfig, resolution: tuple[int, int]):
        self.cfg = cfg
        self.width, self.height = resolution
        self.model = BackgroundModel(self.width, self.height,
                                     history=cfg.knn.history,
                                     match_threshold=cfg.knn.match_threshold,
                                     min_matches=cfg.knn.min_matches)
        self._grays: list[np.ndarray] = []
        self._count = 0

    @property
    def warmup(self) -> int:
        return max(self.cfg.knn.history, 2)

    def process(self, frame: np.ndarray, seg_masks=None) -> RgbFrameResult:
        index = self._count
        self._count += 1
        gray = to_grayscale(frame) if frame.ndim == 3 else frame
        knn_mask = self.model.foreground_mask(gray)
        warm = index >= self.cfg.knn.history

        shake = False
        if self._grays and self.cfg.shake.enabled:
            vectors = compute_sparse_flow(
                self._grays[-1], gray,
                max_corners=self.cfg.flow.max_corners,
                quality_level=self.cfg.flow.quality_level,
                min_distance=self.cfg.flow.min_distance,
                pyramid_levels=self.cfg.flow.pyramid_levels,
                window_size=self.cfg.flow.window_size)
            camera, objects = classify_flow_vectors(
                vectors, self.cfg.motion_gate.flow_margin)
            shake = is_camera_shake(camera, objects,
                                    self.cfg.shake.min_object_fraction,
                                    self.cfg.shake.min_mean_length)

        t = self.cfg.motion_gate.diff_threshold
        motion_fusion = np.zeros_like(gray)
        if self._grays:
            motion_fusion = two_frame_motion(gray, self._grays[-1], t)
            if warm:
                motion_fusion = combine_motion(motion_fusion, knn_mask)

        motion_calibration = None
        if len(self._grays) >= 2 and warm:
            motion_calibration = three_frame_motion(
                gray, self._grays[-1], self._grays[-2], t)
            motion_calibration = combine_motion(motion_calibration, knn_mask)
            if seg_masks:
                gated = gate_segmentation_masks(motion_calibration, seg_masks,
                                                self.cfg.motion_gate)
                motion_calibration = combine_motion(motion_calibration, gated)

        self._grays.append(gray)
        if len(self._grays) > 2:
            self._grays.pop(0)
        return RgbFrameResult(index=index, gray=gray,
                              motion_calibration=motion_calibration,
                              motion_fusion=motion_fusion, shake=shake)

    def edge_cloud(self, result: RgbFrameResult) -> EdgeCloud | None:
        """Calibration-path edge cloud: Canny edges inside the motion mask."""
        if result.motion_calibration is None:
            return None
        edges = canny_edges(result.gray, self.cfg.canny.low, self.cfg.canny.high)
        return motion_edges(edges, result.motion_calibration)


class EventStreamProcessor:
    """Noise-filters the stream once, then serves per-frame windows."""

    def __init__(self, cfg: PipelineConfig, resolution: tuple[int, int],
                 events: Sequence[Event], prefiltered: bool = False):
        self.cfg = cfg
        self.width, self.height = resolution
        self.events = list(events) if prefiltered else \
            filter_noise_events(events, cfg.noise_filter)
        self._times = np.array([e.t_us for e in self.events], dtype=np.int64)

    def window(self, t0_us: int, t1_us: int) -> EventWindow:
        lo, hi = np.searchsorted(self._times, (t0_us, t1_us))
        return EventWindow(self.events[lo:hi], width=self.width,
                           height=self.height, window_us=max(t1_us - t0_us, 1))

    def accumulated(self, t0_us: int, t1_us: int) -> np.ndarray:
        return accumulate_frame(self.window(t0_us, t1_us))

    def edge_cloud(self, t0_us: int, t1_us: int) -> EdgeCloud:
        frame = self.accumulated(t0_us, t1_us)
        return enhance_edges(binarize_motion(frame))


@dataclass
class FrameCalibration:
    index: int
    result: CalibrationResult | None
    error: str | None = None
    reprojection_px: float | None = None
    elapsed_s: float = 0.0


def calibrate_sequence(rgb_frames: Sequence[np.ndarray],
                       event_spans: Sequence[tuple[int, int]],
                       events: Sequence[Event],
                       cfg: PipelineConfig,
                       eb_resolution: tuple[int, int],
                       correspondences=None,
                       seg_masks=None) -> list[FrameCalibration]:
    """Run the calibration pipeline over an in-memory sequence.

    Returns one entry per frame; frames before warm-up or without usable
    motion carry an error string instead of a result.
    """
    import time

    rgb_resolution = (rgb_frames[0].shape[1], rgb_frames[0].shape[0])
    rgb_proc = RgbStreamProcessor(cfg, rgb_resolution)
    eb_proc = EventStreamProcessor(cfg, eb_resolution, events)
    out: list[FrameCalibration] = []
    for index, frame in enumerate(rgb_frames):
        started = time.monotonic()

        def finish(entry: FrameCalibration) -> None:
            entry.elapsed_s = time.monotonic() - started
            out.append(entry)

        masks = seg_masks.get(index) if seg_masks else None
        res = rgb_proc.process(frame, masks)
        if res.motion_calibration is None:
            finish(FrameCalibration(index, None, error="warmup"))
            continue
        if res.shake:
            finish(FrameCalibration(index, None, error="camera_shake"))
            continue
        rgb_cloud = rgb_proc.edge_cloud(res)
        t0, t1 = event_spans[index]
        eb_cloud = eb_proc.edge_cloud(t0, t1)
        if len(eb_cloud) == 0 or rgb_cloud is None or len(rgb_cloud) == 0:
            finish(FrameCalibration(index, None, error="empty_edges"))
            continue
        try:
            result = calibrate_frame(eb_cloud, rgb_cloud, cfg.calibration)
        except CalibrationFailedError as exc:
            finish(FrameCalibration(index, None, error=str(exc)))
            continue
        entry = FrameCalibration(index, result)
        if correspondences:
            pair = correspondences.get(index)
            if pair is not None and len(pair[0]):
                from .calibration import reprojection_error
                entry.reprojection_px = reprojection_error(result.transform, pair)
        finish(entry)
    return out


def select_best_calibration(frames: Sequence[FrameCalibration]) -> FrameCalibration | None:
    """Prefer the frame with the lowest reprojection error; without ground
    truth fall back to the highest consensus inlier count."""
    with_error = [f for f in frames if f.reprojection_px is not None]
    if with_error:
        return min(with_error, key=lambda f: f.reprojection_px)
    with_result = [f for f in frames if f.result is not None]
    if not with_result:
        return None
    return max(with_result, key=lambda f: f.result.inlier_count)


@dataclass
class FusionFrame:
    index: int
    objects: list[FusedObject]
    motion: np.ndarray


class FusionSession:
    """Late-fusion driver over a frame-ordered stream."""

    def __init__(self, cfg: PipelineConfig, rgb_resolution: tuple[int, int],
                 eb_resolution: tuple[int, int], calibration, mode: str = "slf"):
        if mode not in ("slf", "stlf"):
            raise ValueError(f"unknown late-fusion mode {mode!r}")
        self.cfg = cfg
        self.mode = mode
        self.calibration = calibration
        self.rgb_proc = RgbStreamProcessor(cfg, rgb_resolution)
        self.stlf = StlfState(tracker=SortTracker(cfg.sort))

    def process(self, frame: np.ndarray, rgb_dets: Sequence[Detection],
                eb_dets: Sequence[Detection]) -> FusionFrame:
        res = self.rgb_proc.process(frame)
        eb_in_rgb = transform_eb_detections(eb_dets, self.calibration)
        if self.mode == "slf":
            objects = simple_late_fusion(rgb_dets, eb_in_rgb,
                                         res.motion_fusion, self.cfg.fusion)
        else:
            objects = spatiotemporal_late_fusion(self.stlf, rgb_dets, eb_in_rgb,
                                                 res.motion_fusion, self.cfg.fusion)
        return FusionFrame(index=res.index, objects=objects,
                           motion=res.motion_fusion)
