"""SORT-style multi-object tracking: constant-velocity Kalman prediction with
IoU-gated one-to-one assignment."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .calibration import solve_assignment
from .core import Detection, Rect, iou


@dataclass(frozen=True)
class SortConfig:
    max_age: int = 3
    min_hits: int = 1
    iou_threshold: float = 0.3
    process_noise_scale: float = 1.0
    measurement_noise_scale: float = 1.0

    def __post_init__(self):
        if self.max_age < 1 or self.min_hits < 1:
            raise ValueError("max_age and min_hits must be >= 1")
        if not 0.0 < self.iou_threshold < 1.0:
            raise ValueError("iou_threshold must lie in (0, 1)")


def _box_to_state(det: Detection) -> np.ndarray:
    # measurement: center, area, aspect ratio
    return np.array([det.cx, det.cy, det.w * det.h, det.w / det.h], dtype=np.float64)


class Track:
    """One tracked object: a 7-state Kalman filter over (cx, cy, area, aspect)
    with velocities for everything but the aspect ratio."""

    _F = np.eye(7)
    _F[0, 4] = _F[1, 5] = _F[2, 6] = 1.0
    _H = np.eye(4, 7)

    def __init__(self, track_id: int, det: Detection, cfg: SortConfig):
        self.id = track_id
        self.hits = 1
        self.age = 0
        self.time_since_update = 0
        self.x = np.zeros(7)
        self.x[:4] = _box_to_state(det)
        self.P = np.diag([10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4])
        self.Q = np.diag([1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 1e-4]) * cfg.process_noise_scale
        self.R = np.diag([1.0, 1.0, 10.0, 10.0]) * cfg.measurement_noise_scale

    def predict(self) -> None:
        if self.x[2] + self.x[6] <= 0:  # keep predicted area positive
            self.x[6] = 0.0
        self.x = self._F @ self.x
        self.P = self._F @ self.P @ self._F.T + self.Q
        self.age += 1
        self.time_since_update += 1

    def update(self, det: Detection) -> None:
        z = _box_to_state(det)
        y = z - self._H @ self.x
        s = self._H @ self.P @ self._H.T + self.R
        k = self.P @ self._H.T @ np.linalg.inv(s)
        self.x = self.x + k @ y
        self.P = (np.eye(7) - k @ self._H) @ self.P
        self.hits += 1
        self.time_since_update = 0

    def box(self) -> tuple[float, float, float, float]:
        """Current (cx, cy, w, h) estimate."""
        cx, cy, area, aspect = self.x[:4]
        area = max(float(area), 1e-6)
        aspect = max(float(aspect), 1e-6)
        w = float(np.sqrt(area * aspect))
        h = area / w
        return float(cx), float(cy), w, h

    def rect(self) -> Rect:
        cx, cy, w, h = self.box()
        return Rect(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)


class SortTracker:
    """Frame-ordered tracker; call `update` exactly once per frame.

    Track IDs increase strictly and are never reused.
    """

    def __init__(self, cfg: SortConfig | None = None):
        self.cfg = cfg or SortConfig()
        self.tracks: list[Track] = []
        self._next_id = 1

    def update(self, detections: Sequence[Detection]) -> list[tuple[Track, Detection | None]]:
        """Advance one frame: predict, associate, correct, spawn, prune.

        Returns every surviving track with at least `min_hits` updates,
        paired with its matched detection (None when unmatched this frame).
        """
        dets = list(detections)
        for track in self.tracks:
            track.predict()

        matched_det: dict[int, Detection] = {}
        unmatched_dets = set(range(len(dets)))
        if self.tracks and dets:
            iou_matrix = np.zeros((len(self.tracks), len(dets)))
            for ti, track in enumerate(self.tracks):
                trect = track.rect()
                for di, det in enumerate(dets):
                    iou_matrix[ti, di] = iou(trect, det.rect())
            for ti, di in solve_assignment(1.0 - iou_matrix):
                if iou_matrix[ti, di] < self.cfg.iou_threshold:
                    continue
                self.tracks[ti].update(dets[di])
                matched_det[self.tracks[ti].id] = dets[di]
                unmatched_dets.discard(di)

        for di in sorted(unmatched_dets):
            track = Track(self._next_id, dets[di], self.cfg)
            self._next_id += 1
            self.tracks.append(track)
            matched_det[track.id] = dets[di]

        self.tracks = [t for t in self.tracks if t.time_since_update <= self.cfg.max_age]
        return [(t, matched_det.get(t.id)) for t in self.tracks
                if t.hits >= self.cfg.min_hits]
