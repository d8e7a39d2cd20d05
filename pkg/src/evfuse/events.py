"""Event-stream processing: noise filtering, frame accumulation, edge enhancement."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .core import EdgeCloud, Event, SOURCE_EVENT, events_to_arrays

DEFAULT_WINDOW_US = 5000


@dataclass(frozen=True)
class NoiseFilterConfig:
    """Spatiotemporal neighborhood test: an event survives when the box
    [x - r_x, x + r_x] x [y - r_y, y + r_y] x [t - r_t, t] holds at least
    `min_events` events (itself included)."""

    r_x: int = 2
    r_y: int = 2
    r_t: int = 10_000
    min_events: int = 30

    def __post_init__(self):
        if self.r_x < 1 or self.r_y < 1:
            raise ValueError("spatial radii must be >= 1")
        if self.r_t <= 0:
            raise ValueError("temporal radius must be positive")
        if self.min_events < 1:
            raise ValueError("min_events must be >= 1")


@dataclass
class EventWindow:
    """Time-ordered events accumulated over a bounded span on one sensor."""

    events: list[Event]
    width: int
    height: int
    window_us: int = DEFAULT_WINDOW_US

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("sensor resolution must be positive")
        ts = [e.t_us for e in self.events]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError("events must be sorted ascending by t_us")
        if ts and ts[-1] - ts[0] > self.window_us:
            raise ValueError(f"event span {ts[-1] - ts[0]} exceeds window {self.window_us}")
        for e in self.events:
            if e.x >= self.width or e.y >= self.height:
                raise ValueError(f"event at ({e.x}, {e.y}) outside {self.width}x{self.height}")


def filter_noise_events(events: Sequence[Event], cfg: NoiseFilterConfig) -> list[Event]:
    """Drop events whose spatiotemporal neighborhood is too sparse.

    Input must be time-sorted; relative order of survivors is preserved.
    Counting runs one binary search pass per spatial offset over events
    packed into (pixel, time) codes.
    """
    ev = list(events)
    xs, ys, ts, _ = events_to_arrays(ev)
    if np.any(np.diff(ts) < 0):
        raise ValueError("events must be sorted ascending by t_us")
    n = len(ev)
    if n == 0:
        return []
    stride = int(xs.max()) + cfg.r_x + 2
    t_span = int(ts.max()) + cfg.r_t + 2
    codes = np.sort((ys * stride + xs) * t_span + ts)
    t_lo = np.maximum(ts - cfg.r_t, 0)
    counts = np.zeros(n, dtype=np.int64)
    for dy in range(-cfg.r_y, cfg.r_y + 1):
        ty = ys + dy
        valid_y = ty >= 0
        for dx in range(-cfg.r_x, cfg.r_x + 1):
            tx = xs + dx
            valid = valid_y & (tx >= 0)
            base = (ty * stride + tx) * t_span
            lo = np.searchsorted(codes, base + t_lo, side="left")
            hi = np.searchsorted(codes, base + ts, side="right")
            counts += np.where(valid, hi - lo, 0)
    keep = counts >= cfg.min_events
    return [e for e, k in zip(ev, keep) if k]


def accumulate_frame(window: EventWindow) -> np.ndarray:
    """Rasterize a window: 255 where the latest event was +1, 0 where -1, 128 idle."""
    frame = np.full((window.height, window.width), 128, dtype=np.uint8)
    if not window.events:
        return frame
    xs, ys, ts, ps = events_to_arrays(window.events)
    vals = np.where(ps > 0, 255, 0).astype(np.uint8)
    lin = ys * window.width + xs
    # latest event per pixel wins: first occurrence in the reversed stream
    rev = lin[::-1]
    uniq, first_rev = np.unique(rev, return_index=True)
    frame.reshape(-1)[uniq] = vals[::-1][first_rev]
    return frame


def binarize_motion(frame: np.ndarray) -> np.ndarray:
    """Polarity-blind motion mask: active pixels, then 3x3 dilation, then 3x3 median.

    Out-of-image neighbors count as background for both operators.
    """
    fg = frame != 128
    dil = ndimage.binary_dilation(fg, structure=np.ones((3, 3), dtype=bool))
    med = ndimage.median_filter(dil.astype(np.uint8), size=3, mode="constant", cval=0)
    return (med > 0).astype(np.uint8) * 255


# Hit-miss kernels: 1 requires foreground, -1 requires background, 0 is ignored.
HIT_MISS_KERNELS = (
    np.array([[0, 1, 0],
              [0, 1, -1],
              [0, 1, 0]]),
    np.array([[0, -1, 0],
              [1, 1, 1],
              [0, 0, 0]]),
    np.array([[0, -1, 1],
              [0, 1, 0],
              [1, 0, 0]]),
    np.array([[1, -1, 0],
              [0, 1, 0],
              [0, 0, 1]]),
)


def enhance_edges(mask: np.ndarray) -> EdgeCloud:
    """Union of the four directional hit-miss responses as an event edge cloud.

    A pixel responds only when the full 3x3 window fits inside the image.
    """
    fg = mask > 0
    h, w = fg.shape
    total = np.zeros((h, w), dtype=bool)
    if h < 3 or w < 3:
        return EdgeCloud(np.zeros((0, 2)), source=SOURCE_EVENT)
    inner = np.s_[1:h - 1, 1:w - 1]
    for kernel in HIT_MISS_KERNELS:
        resp = np.ones((h - 2, w - 2), dtype=bool)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                cell = kernel[dy + 1, dx + 1]
                if cell == 0:
                    continue
                shifted = fg[1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx]
                resp &= shifted if cell == 1 else ~shifted
        total[inner] |= resp
    ys, xs = np.nonzero(total)
    points = np.stack([xs, ys], axis=1).astype(np.float64)
    return EdgeCloud(points, source=SOURCE_EVENT)
