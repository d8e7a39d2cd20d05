"""Shared domain types and 2D geometry primitives.

Pixel conventions: raw events carry integer pixel indices, everything
downstream of edge extraction is floating point. Boxes are stored as
center + size and converted to corner rectangles for overlap tests.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

CLASS_NAMES = ("pedestrian", "bicycle", "car", "motorcycle", "bus", "truck", "trailer")
CLASS_NAME_TO_ID = {name: i for i, name in enumerate(CLASS_NAMES)}
N_CLASSES = len(CLASS_NAMES)

SOURCE_RGB = "rgb"
SOURCE_EVENT = "event"
SOURCE_FUSED = "fused"
DETECTION_SOURCES = (SOURCE_RGB, SOURCE_EVENT, SOURCE_FUSED)
EDGE_SOURCES = (SOURCE_EVENT, SOURCE_RGB)


@dataclass(frozen=True, slots=True)
class Event:
    """Single brightness-change sample: pixel, microsecond timestamp, polarity."""

    x: int
    y: int
    t_us: int
    polarity: int

    def __post_init__(self):
        if self.polarity not in (-1, 1):
            raise ValueError(f"polarity must be +1 or -1, got {self.polarity}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"negative pixel coordinate ({self.x}, {self.y})")
        if self.t_us < 0:
            raise ValueError(f"negative timestamp {self.t_us}")


@dataclass(frozen=True, slots=True)
class Rect:
    """Axis-aligned rectangle with corner coordinates, x0 <= x1 and y0 <= y1."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise ValueError(f"inverted rectangle ({self.x0},{self.y0},{self.x1},{self.y1})")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height


def iou(a: Rect, b: Rect) -> float:
    """Intersection over union of two rectangles; 0 when disjoint or degenerate."""
    ix = min(a.x1, b.x1) - max(a.x0, b.x0)
    iy = min(a.y1, b.y1) - max(a.y0, b.y0)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


@dataclass(frozen=True, slots=True)
class Detection:
    """2D box detection with class, confidence, source modality and motion flag."""

    class_id: int
    cx: float
    cy: float
    w: float
    h: float
    confidence: float
    source: str = SOURCE_RGB
    moving: bool = False

    def __post_init__(self):
        if not 0 <= self.class_id < N_CLASSES:
            raise ValueError(f"class_id {self.class_id} outside 0..{N_CLASSES - 1}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"non-positive box size ({self.w}, {self.h})")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.source not in DETECTION_SOURCES:
            raise ValueError(f"unknown source {self.source!r}")

    @property
    def class_name(self) -> str:
        return CLASS_NAMES[self.class_id]

    def rect(self) -> Rect:
        return Rect(self.cx - self.w / 2, self.cy - self.h / 2,
                    self.cx + self.w / 2, self.cy + self.h / 2)

    def center(self) -> tuple[float, float]:
        return (self.cx, self.cy)


@dataclass(frozen=True)
class Affine2D:
    """Planar affine transform as a 3x3 matrix with last row fixed to (0, 0, 1)."""

    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"expected 3x3 matrix, got shape {m.shape}")
        if not np.array_equal(m[2], (0.0, 0.0, 1.0)):
            raise ValueError(f"last row must be (0, 0, 1), got {m[2]}")
        if np.linalg.det(m[:2, :2]) == 0.0:
            raise ValueError("upper-left 2x2 block is singular")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Affine2D":
        return cls(np.eye(3))

    @classmethod
    def from_scale_translation(cls, sx: float, sy: float, tx: float, ty: float) -> "Affine2D":
        return cls(np.array([[sx, 0.0, tx], [0.0, sy, ty], [0.0, 0.0, 1.0]]))

    @classmethod
    def from_coefficients(cls, a: float, b: float, tx: float,
                          c: float, d: float, ty: float) -> "Affine2D":
        return cls(np.array([[a, b, tx], [c, d, ty], [0.0, 0.0, 1.0]]))

    def inverse(self) -> "Affine2D":
        inv = np.linalg.inv(self.m)
        inv[2] = (0.0, 0.0, 1.0)
        return Affine2D(inv)

    def __matmul__(self, other: "Affine2D") -> "Affine2D":
        """Composition: (self @ other) applies `other` first, then `self`."""
        m = self.m @ other.m
        m[2] = (0.0, 0.0, 1.0)
        return Affine2D(m)

    @property
    def scale(self) -> tuple[float, float]:
        return (float(self.m[0, 0]), float(self.m[1, 1]))

    @property
    def translation(self) -> tuple[float, float]:
        return (float(self.m[0, 2]), float(self.m[1, 2]))


def apply_affine(t: Affine2D, points) -> np.ndarray:
    """Map a point (2,) or point array (N, 2) through the transform."""
    p = np.asarray(points, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if p.shape[1] != 2:
        raise ValueError(f"expected 2D points, got shape {p.shape}")
    out = p @ t.m[:2, :2].T + t.m[:2, 2]
    return out[0] if single else out


def transform_detection(det: Detection, t: Affine2D) -> Detection:
    """Map a box through an affine: transform the corners, rebox as their AABB."""
    r = det.rect()
    corners = np.array([(r.x0, r.y0), (r.x1, r.y0), (r.x1, r.y1), (r.x0, r.y1)])
    mapped = apply_affine(t, corners)
    x0, y0 = mapped.min(axis=0)
    x1, y1 = mapped.max(axis=0)
    return replace(det, cx=(x0 + x1) / 2, cy=(y0 + y1) / 2,
                   w=max(x1 - x0, 1e-9), h=max(y1 - y0, 1e-9))


@dataclass(frozen=True)
class EdgeCloud:
    """2D point set of moving-object edges from one modality."""

    points: np.ndarray  # (N, 2) float64, columns are (x, y)
    source: str

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True).reshape(-1, 2)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.source not in EDGE_SOURCES:
            raise ValueError(f"unknown edge source {self.source!r}")

    def __len__(self) -> int:
        return self.points.shape[0]


def is_gray_image(img) -> bool:
    return isinstance(img, np.ndarray) and img.ndim == 2 and img.dtype == np.uint8


def is_binary_mask(mask) -> bool:
    if not is_gray_image(mask):
        return False
    return bool(np.isin(mask, (0, 255)).all())


def check_same_shape(*images: np.ndarray) -> None:
    shapes = {img.shape[:2] for img in images}
    if len(shapes) > 1:
        raise ValueError(f"dimension mismatch: {sorted(shapes)}")


def events_to_arrays(events: Iterable[Event]):
    """Split an event sequence into (x, y, t_us, polarity) int64 arrays."""
    ev = list(events)
    if not ev:
        z = np.zeros(0, dtype=np.int64)
        return z, z.copy(), z.copy(), z.copy()
    xs = np.fromiter((e.x for e in ev), dtype=np.int64, count=len(ev))
    ys = np.fromiter((e.y for e in ev), dtype=np.int64, count=len(ev))
    ts = np.fromiter((e.t_us for e in ev), dtype=np.int64, count=len(ev))
    ps = np.fromiter((e.polarity for e in ev), dtype=np.int64, count=len(ev))
    return xs, ys, ts, ps
