"""Deterministic synthetic scene generator.

Renders moving shapes into RGB frames and, through the inverse of a known
ground-truth affine, into an event-camera log-intensity field. Events fire
wherever the per-pixel log-intensity change since the pixel's last event
reaches the contrast threshold. The generator also emits ground-truth boxes
in both pixel frames and exact boundary correspondences, which makes it the
oracle for calibration and fusion tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (Affine2D, Detection, Event, SOURCE_EVENT, SOURCE_RGB,
                   apply_affine)
from . import dataset_io


class SceneConfigError(ValueError):
    """Invalid synthetic scene configuration."""


@dataclass(frozen=True)
class EventModelConfig:
    contrast_threshold: float = 0.2
    refractory_us: int = 100

    def __post_init__(self):
        if self.contrast_threshold <= 0:
            raise SceneConfigError("contrast_threshold must be positive")
        if self.refractory_us < 0:
            raise SceneConfigError("refractory_us must be non-negative")


@dataclass(frozen=True)
class ObjectSpec:
    """One moving shape.

    Texture is a sinusoidal intensity ripple riding along the motion
    direction. Its linear contrast can exceed a frame-differencing threshold
    while its log contrast stays below the event contrast threshold, which
    mirrors a bright textured surface: the RGB camera sees interior motion,
    the event camera fires only at the object boundary.
    """

    shape: str  # "rectangle" or "ellipse"
    size: tuple[float, float]  # (w, h) in RGB pixels
    velocity: tuple[float, float]  # RGB pixels per frame
    intensity: int
    start: tuple[float, float]  # center at start_frame, RGB pixels
    start_frame: int = 0
    class_id: int = 2
    detection_confidence: float = 0.9
    texture_amplitude: float = 0.0
    texture_period: float = 24.0  # RGB pixels

    def __post_init__(self):
        if self.shape not in ("rectangle", "ellipse"):
            raise SceneConfigError(f"unknown shape {self.shape!r}")
        if self.size[0] <= 0 or self.size[1] <= 0:
            raise SceneConfigError("object size must be positive")
        if not 1 <= self.intensity <= 255:
            raise SceneConfigError("intensity must lie in 1..255")
        if not all(math.isfinite(v) for v in self.velocity):
            raise SceneConfigError("velocity must be finite")
        if self.texture_amplitude < 0 or self.texture_period <= 0:
            raise SceneConfigError("invalid texture parameters")

    def center_at(self, frame_fraction: float) -> tuple[float, float]:
        dt = frame_fraction - self.start_frame
        return (self.start[0] + self.velocity[0] * dt,
                self.start[1] + self.velocity[1] * dt)

    def motion_direction(self) -> tuple[float, float]:
        n = math.hypot(*self.velocity)
        if n == 0:
            return (1.0, 0.0)
        return (self.velocity[0] / n, self.velocity[1] / n)


@dataclass(frozen=True)
class NoiseSpec:
    event_noise_rate: float = 0.0  # expected noise events per pixel per frame window
    rgb_gaussian_sigma: float = 0.0


@dataclass
class SceneConfig:
    seed: int
    ground_truth: Affine2D
    objects: list[ObjectSpec]
    rgb_resolution: tuple[int, int] = (1920, 1200)
    eb_resolution: tuple[int, int] = (640, 480)
    frames: int = 12
    frame_interval_us: int = 20000
    accumulation_window_us: int | None = 5000  # None: the full frame interval
    background: int = 40
    # static dot grid on the background; gives the sparse flow tracker
    # stationary corners without producing events or motion
    background_texture_amplitude: float = 0.0
    background_texture_pitch: int = 48
    substeps_per_frame: int = 4
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        if self.frames < 1:
            raise SceneConfigError("need at least one frame")
        if self.frame_interval_us < 1:
            raise SceneConfigError("frame interval must be positive")
        if not 1 <= self.background <= 255:
            raise SceneConfigError("background intensity must lie in 1..255")
        if self.substeps_per_frame < 1:
            raise SceneConfigError("substeps_per_frame must be >= 1")
        if self.accumulation_window_us is not None \
                and not 0 < self.accumulation_window_us <= self.frame_interval_us:
            raise SceneConfigError("accumulation window must fit the frame interval")

    @property
    def window_us(self) -> int:
        if self.accumulation_window_us is None:
            return self.frame_interval_us
        return self.accumulation_window_us


@dataclass
class SyntheticScene:
    config: SceneConfig
    frames: list[np.ndarray]  # (H, W, 3) uint8, RGB order
    frame_times_us: list[int]
    event_spans: list[tuple[int, int]]  # half-open [t0, t1) per frame
    events: list[Event]
    labels_rgb: dict[int, list[Detection]]
    labels_eb: dict[int, list[Detection]]
    correspondences: dict[int, tuple[np.ndarray, np.ndarray]]


def _coverage(shape: str, cx: float, cy: float, w: float, h: float,
              px: np.ndarray, py: np.ndarray) -> np.ndarray:
    if shape == "rectangle":
        return (np.abs(px - cx) <= w / 2) & (np.abs(py - cy) <= h / 2)
    nx = (px - cx) / (w / 2)
    ny = (py - cy) / (h / 2)
    return nx * nx + ny * ny <= 1.0


def _boundary_points(obj: ObjectSpec, cx: float, cy: float, n: int) -> np.ndarray:
    w, h = obj.size
    if obj.shape == "ellipse":
        theta = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        return np.stack([cx + (w / 2) * np.cos(theta),
                         cy + (h / 2) * np.sin(theta)], axis=1)
    perimeter = 2.0 * (w + h)
    pts = []
    for u in np.linspace(0.0, perimeter, n, endpoint=False):
        if u < w:
            pts.append((cx - w / 2 + u, cy - h / 2))
        elif u < w + h:
            pts.append((cx + w / 2, cy - h / 2 + (u - w)))
        elif u < 2 * w + h:
            pts.append((cx + w / 2 - (u - w - h), cy + h / 2))
        else:
            pts.append((cx - w / 2, cy + h / 2 - (u - 2 * w - h)))
    return np.array(pts)


def _box_intersects(cx: float, cy: float, w: float, h: float,
                    width: int, height: int) -> bool:
    return cx + w / 2 > 0 and cx - w / 2 < width and cy + h / 2 > 0 and cy - h / 2 < height


def _validate_visibility(cfg: SceneConfig) -> None:
    inv = cfg.ground_truth.inverse()
    for oi, obj in enumerate(cfg.objects):
        visible = False
        for k in range(cfg.frames):
            cx, cy = obj.center_at(float(k))
            if _box_intersects(cx, cy, obj.size[0], obj.size[1], *cfg.rgb_resolution):
                visible = True
                break
            corners = np.array([[cx - obj.size[0] / 2, cy - obj.size[1] / 2],
                                [cx + obj.size[0] / 2, cy + obj.size[1] / 2]])
            eb = apply_affine(inv, corners)
            if _box_intersects(float(eb[:, 0].mean()), float(eb[:, 1].mean()),
                               abs(float(eb[1, 0] - eb[0, 0])),
                               abs(float(eb[1, 1] - eb[0, 1])), *cfg.eb_resolution):
                visible = True
                break
        if not visible:
            raise SceneConfigError(f"object {oi} never enters either field of view")


def _eb_label(obj: ObjectSpec, cx: float, cy: float, inv: Affine2D,
              eb_resolution: tuple[int, int],
              min_visible: float = 0.25) -> Detection | None:
    w, h = obj.size
    corners = np.array([(cx - w / 2, cy - h / 2), (cx + w / 2, cy - h / 2),
                        (cx + w / 2, cy + h / 2), (cx - w / 2, cy + h / 2)])
    mapped = apply_affine(inv, corners)
    x0, y0 = mapped.min(axis=0)
    x1, y1 = mapped.max(axis=0)
    full_area = (x1 - x0) * (y1 - y0)
    cx0 = max(x0, 0.0)
    cy0 = max(y0, 0.0)
    cx1 = min(x1, float(eb_resolution[0]))
    cy1 = min(y1, float(eb_resolution[1]))
    if cx1 <= cx0 or cy1 <= cy0:
        return None
    if (cx1 - cx0) * (cy1 - cy0) < min_visible * full_area:
        return None
    return Detection(class_id=obj.class_id, cx=(cx0 + cx1) / 2, cy=(cy0 + cy1) / 2,
                     w=cx1 - cx0, h=cy1 - cy0, confidence=obj.detection_confidence,
                     source=SOURCE_EVENT, moving=True)


def generate_scene(cfg: SceneConfig,
                   ev_cfg: EventModelConfig | None = None,
                   correspondence_points: int = 16) -> SyntheticScene:
    """Render the scene and synthesize its event stream deterministically."""
    ev_cfg = ev_cfg or EventModelConfig()
    _validate_visibility(cfg)
    rng = np.random.default_rng(cfg.seed)
    inv = cfg.ground_truth.inverse()
    rgb_w, rgb_h = cfg.rgb_resolution
    eb_w, eb_h = cfg.eb_resolution

    # RGB pixel-center grids
    rgb_px, rgb_py = np.meshgrid(np.arange(rgb_w, dtype=np.float64),
                                 np.arange(rgb_h, dtype=np.float64))
    # event pixel centers expressed in RGB coordinates (affine is constant)
    eb_grid = np.stack(np.meshgrid(np.arange(eb_w, dtype=np.float64),
                                   np.arange(eb_h, dtype=np.float64)), axis=-1)
    eb_in_rgb = apply_affine(cfg.ground_truth, eb_grid.reshape(-1, 2)).reshape(eb_h, eb_w, 2)
    eb_px = eb_in_rgb[..., 0]
    eb_py = eb_in_rgb[..., 1]

    def active(frame_fraction: float) -> list[ObjectSpec]:
        return [o for o in cfg.objects if frame_fraction >= o.start_frame]

    def render(frame_fraction: float, px: np.ndarray, py: np.ndarray) -> np.ndarray:
        """Scene intensity sampled at pixel centers given in RGB coordinates."""
        canvas = np.full(px.shape, float(cfg.background))
        if cfg.background_texture_amplitude > 0:
            pitch = cfg.background_texture_pitch
            dots = (np.mod(px, pitch) < 4) & (np.mod(py, pitch) < 4)
            canvas[dots] += cfg.background_texture_amplitude
        for obj in active(frame_fraction):
            cx, cy = obj.center_at(frame_fraction)
            inside = _coverage(obj.shape, cx, cy, *obj.size, px, py)
            if obj.texture_amplitude > 0:
                dx, dy = obj.motion_direction()
                u = px[inside] * dx + py[inside] * dy - (cx * dx + cy * dy)
                ripple = obj.texture_amplitude * np.sin(2 * np.pi * u / obj.texture_period)
                canvas[inside] = np.clip(obj.intensity + ripple, 1.0, 255.0)
            else:
                canvas[inside] = obj.intensity
        return canvas

    def render_rgb(frame_fraction: float) -> np.ndarray:
        return render(frame_fraction, rgb_px, rgb_py)

    def render_eb_intensity(frame_fraction: float) -> np.ndarray:
        return render(frame_fraction, eb_px, eb_py)

    # substeps fine enough that the fastest boundary moves at most ~1 event
    # pixel per step (pins events to boundaries) and that several steps land
    # inside each accumulation window (keeps the window's sweep isotropic)
    max_eb_speed = 0.0
    lin_inv = inv.m[:2, :2]
    for obj in cfg.objects:
        v_eb = lin_inv @ np.asarray(obj.velocity, dtype=np.float64)
        max_eb_speed = max(max_eb_speed, float(np.linalg.norm(v_eb)))
    substeps = max(cfg.substeps_per_frame,
                   int(math.ceil(max_eb_speed)) + 1,
                   math.ceil(4 * cfg.frame_interval_us / cfg.window_us))

    def dirty_region(obj: ObjectSpec, frac0: float, frac1: float):
        """Event-pixel bounding box covering the object over [frac0, frac1]."""
        corners = []
        for frac in (frac0, frac1):
            cx, cy = obj.center_at(frac)
            w, h = obj.size
            corners.extend([(cx - w / 2, cy - h / 2), (cx + w / 2, cy + h / 2),
                            (cx - w / 2, cy + h / 2), (cx + w / 2, cy - h / 2)])
        mapped = apply_affine(inv, np.array(corners))
        x0 = max(int(np.floor(mapped[:, 0].min())) - 2, 0)
        y0 = max(int(np.floor(mapped[:, 1].min())) - 2, 0)
        x1 = min(int(np.ceil(mapped[:, 0].max())) + 3, eb_w)
        y1 = min(int(np.ceil(mapped[:, 1].max())) + 3, eb_h)
        if x1 <= x0 or y1 <= y0:
            return None
        return (y0, y1, x0, x1)

    # event synthesis: reference log level per pixel, reset on firing; only
    # regions touched by an object can change, so rendering stays local
    ref_log = np.log(render_eb_intensity(0.0))
    last_fire = np.full((eb_h, eb_w), -10 ** 9, dtype=np.int64)
    raw: list[tuple[int, int, int, int]] = []  # (t, y, x, p)
    total_steps = (cfg.frames - 1) * substeps
    for step in range(1, total_steps + 1):
        frac = step / substeps
        prev_frac = (step - 1) / substeps
        t_us = round(frac * cfg.frame_interval_us)
        for obj in cfg.objects:
            if frac < obj.start_frame:
                continue
            region = dirty_region(obj, max(prev_frac, obj.start_frame), frac)
            if region is None:
                continue
            y0, y1, x0, x1 = region
            sub = np.s_[y0:y1, x0:x1]
            log_now = np.log(render(frac, eb_px[sub], eb_py[sub]))
            delta = log_now - ref_log[sub]
            fired = (np.abs(delta) >= ev_cfg.contrast_threshold) \
                & (t_us - last_fire[sub] >= ev_cfg.refractory_us)
            if fired.any():
                ys, xs = np.nonzero(fired)
                pol = np.sign(delta[fired]).astype(np.int64)
                raw.extend(zip([t_us] * len(ys), (ys + y0).tolist(),
                               (xs + x0).tolist(), pol.tolist()))
                ref_log[sub][fired] = log_now[fired]
                last_fire[sub][fired] = t_us

    # accumulation spans are centered on the frame timestamps, so the event
    # strips straddle the rendered object boundary instead of trailing it
    frame_times = [k * cfg.frame_interval_us for k in range(cfg.frames)]
    half = cfg.window_us // 2
    event_spans = []
    for k in range(cfg.frames):
        t0 = max(frame_times[k] - half, 0)
        t1 = frame_times[k] + (cfg.window_us - half)
        event_spans.append((t0, t1))

    # uniform noise: the configured rate is per pixel per accumulation window,
    # spread over the whole recording
    total_time = frame_times[-1] if cfg.frames > 1 else 0
    if cfg.noise.event_noise_rate > 0 and total_time > 0:
        n_noise = int(round(cfg.noise.event_noise_rate * eb_w * eb_h
                            * total_time / cfg.window_us))
        xs = rng.integers(0, eb_w, size=n_noise)
        ys = rng.integers(0, eb_h, size=n_noise)
        ts = rng.integers(1, total_time + 1, size=n_noise)
        ps = rng.choice((-1, 1), size=n_noise)
        raw.extend(zip(ts.tolist(), ys.tolist(), xs.tolist(), ps.tolist()))

    raw.sort()
    events = [Event(x=x, y=y, t_us=t, polarity=p) for t, y, x, p in raw]

    # RGB frames with optional sensor noise
    frames = []
    for k in range(cfg.frames):
        canvas = render_rgb(float(k))
        if cfg.noise.rgb_gaussian_sigma > 0:
            canvas = canvas + rng.normal(0.0, cfg.noise.rgb_gaussian_sigma, canvas.shape)
        gray = np.clip(np.rint(canvas), 0, 255).astype(np.uint8)
        frames.append(np.repeat(gray[:, :, None], 3, axis=2))

    labels_rgb: dict[int, list[Detection]] = {}
    labels_eb: dict[int, list[Detection]] = {}
    correspondences: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for k in range(cfg.frames):
        rgb_list = []
        eb_list = []
        eb_pts_all = []
        rgb_pts_all = []
        for obj in active(float(k)):
            cx, cy = obj.center_at(float(k))
            if not _box_intersects(cx, cy, *obj.size, rgb_w, rgb_h):
                continue
            moving = any(v != 0.0 for v in obj.velocity)
            rgb_list.append(Detection(class_id=obj.class_id, cx=cx, cy=cy,
                                      w=obj.size[0], h=obj.size[1],
                                      confidence=obj.detection_confidence,
                                      source=SOURCE_RGB, moving=moving))
            eb_det = _eb_label(obj, cx, cy, inv, cfg.eb_resolution)
            if eb_det is not None:
                eb_list.append(eb_det)
            boundary_rgb = _boundary_points(obj, cx, cy, correspondence_points)
            boundary_eb = apply_affine(inv, boundary_rgb)
            ok = ((boundary_rgb[:, 0] >= 0) & (boundary_rgb[:, 0] < rgb_w)
                  & (boundary_rgb[:, 1] >= 0) & (boundary_rgb[:, 1] < rgb_h)
                  & (boundary_eb[:, 0] >= 0) & (boundary_eb[:, 0] < eb_w)
                  & (boundary_eb[:, 1] >= 0) & (boundary_eb[:, 1] < eb_h))
            eb_pts_all.append(boundary_eb[ok])
            rgb_pts_all.append(boundary_rgb[ok])
        labels_rgb[k] = rgb_list
        labels_eb[k] = eb_list
        if eb_pts_all:
            correspondences[k] = (np.vstack(eb_pts_all), np.vstack(rgb_pts_all))
        else:
            correspondences[k] = (np.zeros((0, 2)), np.zeros((0, 2)))

    return SyntheticScene(config=cfg, frames=frames, frame_times_us=frame_times,
                          event_spans=event_spans, events=events,
                          labels_rgb=labels_rgb, labels_eb=labels_eb,
                          correspondences=correspondences)


def write_scene(scene: SyntheticScene, outdir: str | Path,
                name: str = "synthetic") -> Path:
    """Write the scene in the on-disk sequence layout; returns the manifest path."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    frame_entries = []
    for k, frame in enumerate(scene.frames):
        rel = f"frames/{k:06d}.png"
        dataset_io.save_image_png(frame, outdir / rel)
        t0, t1 = scene.event_spans[k]
        frame_entries.append(dataset_io.FrameEntry(index=k, rgb=rel, t0_us=t0, t1_us=t1))
    dataset_io.save_events(scene.events, outdir / "events.csv")
    dataset_io.save_labels_openlabel(scene.labels_rgb, outdir / "labels_rgb.json")
    dataset_io.save_labels_openlabel(scene.labels_eb, outdir / "labels_eb.json")
    dataset_io.save_detections(scene.labels_rgb, outdir / "detections_rgb.json")
    dataset_io.save_detections(scene.labels_eb, outdir / "detections_eb.json")
    dataset_io.save_correspondences(scene.correspondences, outdir / "correspondences.json")
    manifest = dataset_io.SequenceManifest(
        name=name,
        eb_resolution=scene.config.eb_resolution,
        rgb_resolution=scene.config.rgb_resolution,
        events="events.csv",
        frames=frame_entries,
        illumination="day",
        detections_rgb="detections_rgb.json",
        detections_eb="detections_eb.json",
        labels_rgb="labels_rgb.json",
        labels_eb="labels_eb.json",
        correspondences="correspondences.json",
        base_dir=outdir,
    )
    dataset_io.save_manifest(manifest, outdir / "manifest.json")
    return outdir / "manifest.json"
