"""File formats: event CSV, detection JSON, OpenLABEL-subset labels,
calibration JSON, sequence manifests, segmentation masks, PNG/PGM images.

Every save/load pair round-trips losslessly for the fields defined here.
Loaders abort with positional information instead of silently dropping rows.
"""
from __future__ import annotations

import json
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from .core import Affine2D, CLASS_NAME_TO_ID, Detection, Event, SOURCE_RGB
from .rgbmotion import SegMask

ILLUMINATION_TAGS = ("day", "n1", "n2")


class DatasetIOError(Exception):
    """Malformed or inconsistent on-disk data."""


# ---------------------------------------------------------------------------
# atomic writes

def write_bytes_atomic(path: str | Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text_atomic(path: str | Path, text: str) -> None:
    write_bytes_atomic(path, text.encode("utf-8"))


def write_json_atomic(path: str | Path, obj) -> None:
    write_text_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# events

EVENT_CSV_HEADER = "t_us,x,y,p"


def save_events(events: Sequence[Event], path: str | Path) -> None:
    lines = [EVENT_CSV_HEADER]
    lines.extend(f"{e.t_us},{e.x},{e.y},{e.polarity}" for e in events)
    write_text_atomic(path, "\n".join(lines) + "\n")


def load_events(path: str | Path, resolution: tuple[int, int] | None = None) -> list[Event]:
    """Parse a `t_us,x,y,p` CSV; rows must be time-sorted with polarity +-1."""
    events: list[Event] = []
    prev_t = -1
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != EVENT_CSV_HEADER:
            raise DatasetIOError(f"{path}: line 1: expected header "
                                 f"{EVENT_CSV_HEADER!r}, got {header!r}")
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise DatasetIOError(f"{path}: line {lineno}: expected 4 fields")
            try:
                t_us, x, y, p = (int(v) for v in parts)
            except ValueError as exc:
                raise DatasetIOError(f"{path}: line {lineno}: {exc}") from exc
            if p not in (-1, 1):
                raise DatasetIOError(f"{path}: line {lineno}: invalid polarity {p}")
            if x < 0 or y < 0:
                raise DatasetIOError(f"{path}: line {lineno}: negative coordinate")
            if resolution is not None and (x >= resolution[0] or y >= resolution[1]):
                raise DatasetIOError(f"{path}: line {lineno}: coordinate ({x}, {y}) "
                                     f"outside {resolution[0]}x{resolution[1]}")
            if t_us < prev_t:
                raise DatasetIOError(f"{path}: line {lineno}: timestamps not sorted")
            prev_t = t_us
            events.append(Event(x=x, y=y, t_us=t_us, polarity=p))
    return events


# ---------------------------------------------------------------------------
# detections

def save_detections(dets: Mapping[int, Sequence[Detection]], path: str | Path) -> None:
    frames = []
    for index in sorted(dets):
        frames.append({
            "frame_index": index,
            "detections": [
                {"class_id": d.class_id, "cx": d.cx, "cy": d.cy, "w": d.w,
                 "h": d.h, "confidence": d.confidence}
                for d in dets[index]
            ],
        })
    write_json_atomic(path, frames)


def load_detections(path: str | Path, source: str = SOURCE_RGB) -> dict[int, list[Detection]]:
    """Load per-frame detection lists; class and confidence bounds are enforced."""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, list):
        raise DatasetIOError(f"{path}: expected a top-level array of frames")
    out: dict[int, list[Detection]] = {}
    for fi, frame in enumerate(data):
        try:
            index = int(frame["frame_index"])
            if "detections" not in frame:
                raise DatasetIOError(f"{path}: frame {index}: missing detections key")
            dets = []
            for di, d in enumerate(frame["detections"]):
                try:
                    dets.append(Detection(class_id=int(d["class_id"]),
                                          cx=float(d["cx"]), cy=float(d["cy"]),
                                          w=float(d["w"]), h=float(d["h"]),
                                          confidence=float(d["confidence"]),
                                          source=source))
                except (ValueError, KeyError) as exc:
                    raise DatasetIOError(
                        f"{path}: frame {index}, detection {di}: {exc}") from exc
        except (KeyError, TypeError) as exc:
            raise DatasetIOError(f"{path}: frame entry {fi}: {exc}") from exc
        if index in out:
            raise DatasetIOError(f"{path}: duplicate frame_index {index}")
        out[index] = dets
    return out


# ---------------------------------------------------------------------------
# OpenLABEL subset

def save_labels_openlabel(labels: Mapping[int, Sequence[Detection]],
                          path: str | Path) -> None:
    frames = {}
    for index in sorted(labels):
        objects = {}
        for uid, det in enumerate(labels[index]):
            objects[str(uid)] = {
                "type": det.class_name,
                "object_data": {"bbox": [det.cx, det.cy, det.w, det.h]},
                "moving": det.moving,
                "confidence": det.confidence,
            }
        frames[str(index)] = {"objects": objects}
    write_json_atomic(path, {"openlabel": {"frames": frames}})


def load_labels_openlabel(path: str | Path,
                          source: str = SOURCE_RGB) -> dict[int, list[Detection]]:
    """Load the OpenLABEL subset written by `save_labels_openlabel`.

    Unknown keys are ignored with a warning; a missing bbox or an unknown
    type string is an error.
    """
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    try:
        frames = data["openlabel"]["frames"]
    except (KeyError, TypeError) as exc:
        raise DatasetIOError(f"{path}: missing openlabel.frames") from exc
    known_keys = {"type", "object_data", "moving", "confidence"}
    out: dict[int, list[Detection]] = {}
    for fkey, frame in frames.items():
        index = int(fkey)
        dets = []
        objects = frame.get("objects", {})
        for uid in sorted(objects, key=int):
            obj = objects[uid]
            unknown = set(obj) - known_keys
            if unknown:
                warnings.warn(f"{path}: frame {index}, object {uid}: "
                              f"ignoring keys {sorted(unknown)}")
            type_name = obj.get("type")
            if type_name not in CLASS_NAME_TO_ID:
                raise DatasetIOError(f"{path}: frame {index}, object {uid}: "
                                     f"unknown type {type_name!r}")
            bbox = obj.get("object_data", {}).get("bbox")
            if not isinstance(bbox, list) or len(bbox) != 4:
                raise DatasetIOError(f"{path}: frame {index}, object {uid}: "
                                     f"missing or malformed bbox")
            dets.append(Detection(class_id=CLASS_NAME_TO_ID[type_name],
                                  cx=float(bbox[0]), cy=float(bbox[1]),
                                  w=float(bbox[2]), h=float(bbox[3]),
                                  confidence=float(obj.get("confidence", 1.0)),
                                  source=source,
                                  moving=bool(obj.get("moving", False))))
        out[index] = dets
    return out


# ---------------------------------------------------------------------------
# calibration

def save_calibration(t: Affine2D, meta: Mapping[str, object], path: str | Path) -> None:
    payload = {
        "matrix": [float(v) for v in t.m.reshape(-1)],
        "source_resolution": list(meta.get("source_resolution", [])),
        "target_resolution": list(meta.get("target_resolution", [])),
        "created_by": str(meta.get("created_by", "evfuse")),
    }
    write_json_atomic(path, payload)


def load_calibration(path: str | Path) -> tuple[Affine2D, dict]:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    matrix = data.get("matrix")
    if not isinstance(matrix, list) or len(matrix) != 9:
        raise DatasetIOError(f"{path}: matrix must hold 9 values")
    m = np.array(matrix, dtype=np.float64).reshape(3, 3)
    if not np.array_equal(m[2], (0.0, 0.0, 1.0)):
        raise DatasetIOError(f"{path}: last row must be (0, 0, 1), got {m[2].tolist()}")
    if np.linalg.det(m[:2, :2]) == 0.0:
        raise DatasetIOError(f"{path}: transform is not invertible")
    meta = {k: data[k] for k in ("source_resolution", "target_resolution", "created_by")
            if k in data}
    return Affine2D(m), meta


# ---------------------------------------------------------------------------
# images

def save_image_png(image: np.ndarray, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "L" if image.ndim == 2 else "RGB"
    buf = Path(str(path) + ".tmp")
    Image.fromarray(image, mode=mode).save(buf, format="PNG")
    os.replace(buf, path)


def load_image_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode in ("L", "RGB"):
            return np.asarray(img)
        if img.mode == "RGBA":
            return np.asarray(img.convert("RGB"))
        return np.asarray(img.convert("L"))


def save_pgm(image: np.ndarray, path: str | Path) -> None:
    """Binary 8-bit PGM (P5)."""
    if image.ndim != 2 or image.dtype != np.uint8:
        raise ValueError("PGM output requires a 2D uint8 image")
    h, w = image.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    write_bytes_atomic(path, header + image.tobytes())


def load_pgm(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P5"):
        raise DatasetIOError(f"{path}: not a binary PGM file")
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":  # comment line
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(v) for v in fields)
    if maxval != 255:
        raise DatasetIOError(f"{path}: only 8-bit PGM supported, maxval {maxval}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
    return pixels.reshape(h, w).copy()


# ---------------------------------------------------------------------------
# segmentation masks: run-length JSON or per-frame PNG stacks

def save_segmentation_rle(masks: Mapping[int, Sequence[SegMask]], path: str | Path) -> None:
    frames = []
    for index in sorted(masks):
        entries = []
        for seg in masks[index]:
            flat = (seg.mask.reshape(-1) > 0).astype(np.uint8)
            # counts alternate zero-runs and one-runs, starting with zeros
            changes = np.flatnonzero(np.diff(flat))
            bounds = np.concatenate([[0], changes + 1, [flat.size]])
            counts = np.diff(bounds).tolist()
            if flat.size and flat[0] == 1:
                counts = [0] + counts
            entries.append({"class_id": seg.class_id,
                            "size": [int(seg.mask.shape[0]), int(seg.mask.shape[1])],
                            "counts": counts})
        frames.append({"frame_index": index, "masks": entries})
    write_json_atomic(path, frames)


def load_segmentation_rle(path: str | Path) -> dict[int, list[SegMask]]:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    out: dict[int, list[SegMask]] = {}
    for frame in data:
        index = int(frame["frame_index"])
        segs = []
        for mi, entry in enumerate(frame.get("masks", [])):
            h, w = entry["size"]
            counts = entry["counts"]
            if sum(counts) != h * w:
                raise DatasetIOError(f"{path}: frame {index}, mask {mi}: "
                                     f"run lengths sum to {sum(counts)}, expected {h * w}")
            flat = np.zeros(h * w, dtype=np.uint8)
            pos = 0
            value = 0
            for run in counts:
                if value:
                    flat[pos:pos + run] = 255
                pos += run
                value ^= 1
            segs.append(SegMask(mask=flat.reshape(h, w), class_id=int(entry["class_id"])))
        out[index] = segs
    return out


def load_segmentation_png_stack(directory: str | Path) -> dict[int, list[SegMask]]:
    """Per-frame PNG stacks: <dir>/<frame>/<instance>_<class_id>.png."""
    directory = Path(directory)
    out: dict[int, list[SegMask]] = {}
    for frame_dir in sorted(directory.iterdir()):
        if not frame_dir.is_dir():
            continue
        index = int(frame_dir.name)
        segs = []
        for mask_file in sorted(frame_dir.glob("*.png")):
            stem = mask_file.stem
            try:
                class_id = int(stem.split("_")[-1])
            except ValueError as exc:
                raise DatasetIOError(f"{mask_file}: filename must end in _<class_id>") from exc
            img = load_image_png(mask_file)
            segs.append(SegMask(mask=(img > 0).astype(np.uint8) * 255, class_id=class_id))
        out[index] = segs
    return out


def load_segmentation_masks(path: str | Path) -> dict[int, list[SegMask]]:
    path = Path(path)
    if path.is_dir():
        return load_segmentation_png_stack(path)
    return load_segmentation_rle(path)


# ---------------------------------------------------------------------------
# manifests

@dataclass(frozen=True)
class FrameEntry:
    index: int
    rgb: str
    t0_us: int
    t1_us: int

    def __post_init__(self):
        if self.t1_us <= self.t0_us:
            raise ValueError(f"frame {self.index}: empty event span")


@dataclass
class SequenceManifest:
    """Description of one recorded or generated sequence on disk.

    Paths are relative to the manifest location. This layout is this
    toolkit's own; adapters for other datasets should produce it.
    """

    name: str
    eb_resolution: tuple[int, int]
    rgb_resolution: tuple[int, int]
    events: str
    frames: list[FrameEntry]
    illumination: str = "day"
    detections_rgb: str | None = None
    detections_eb: str | None = None
    labels_rgb: str | None = None
    labels_eb: str | None = None
    masks: str | None = None
    correspondences: str | None = None
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self):
        if self.illumination not in ILLUMINATION_TAGS:
            raise ValueError(f"illumination must be one of {ILLUMINATION_TAGS}")
        indices = [f.index for f in self.frames]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ValueError("frame indices must be strictly increasing")
        spans = [(f.t0_us, f.t1_us) for f in self.frames]
        for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
            if b0 < a1:
                raise ValueError("event spans must be ordered and non-overlapping")

    def resolve(self, rel: str) -> Path:
        return self.base_dir / rel


def save_manifest(manifest: SequenceManifest, path: str | Path) -> None:
    payload = {
        "name": manifest.name,
        "illumination": manifest.illumination,
        "eb_resolution": list(manifest.eb_resolution),
        "rgb_resolution": list(manifest.rgb_resolution),
        "events": manifest.events,
        "frames": [{"index": f.index, "rgb": f.rgb,
                    "event_span": [f.t0_us, f.t1_us]} for f in manifest.frames],
    }
    for key in ("detections_rgb", "detections_eb", "labels_rgb", "labels_eb",
                "masks", "correspondences"):
        value = getattr(manifest, key)
        if value is not None:
            payload[key] = value
    write_json_atomic(path, payload)


def load_manifest(path: str | Path) -> SequenceManifest:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    try:
        frames = [FrameEntry(index=int(fr["index"]), rgb=fr["rgb"],
                             t0_us=int(fr["event_span"][0]),
                             t1_us=int(fr["event_span"][1]))
                  for fr in data["frames"]]
        manifest = SequenceManifest(
            name=data["name"],
            eb_resolution=tuple(data["eb_resolution"]),
            rgb_resolution=tuple(data["rgb_resolution"]),
            events=data["events"],
            frames=frames,
            illumination=data.get("illumination", "day"),
            detections_rgb=data.get("detections_rgb"),
            detections_eb=data.get("detections_eb"),
            labels_rgb=data.get("labels_rgb"),
            labels_eb=data.get("labels_eb"),
            masks=data.get("masks"),
            correspondences=data.get("correspondences"),
            base_dir=path.parent,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetIOError(f"{path}: {exc}") from exc
    return manifest


# ---------------------------------------------------------------------------
# ground-truth correspondences

def save_correspondences(corr: Mapping[int, tuple[np.ndarray, np.ndarray]],
                         path: str | Path) -> None:
    payload = [{"frame_index": i,
                "eb": np.asarray(corr[i][0], dtype=float).tolist(),
                "rgb": np.asarray(corr[i][1], dtype=float).tolist()}
               for i in sorted(corr)]
    write_json_atomic(path, payload)


def load_correspondences(path: str | Path) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    out = {}
    for frame in data:
        eb = np.asarray(frame["eb"], dtype=np.float64).reshape(-1, 2)
        rgb = np.asarray(frame["rgb"], dtype=np.float64).reshape(-1, 2)
        if eb.shape != rgb.shape:
            raise DatasetIOError(f"{path}: frame {frame['frame_index']}: "
                                 f"point count mismatch")
        out[int(frame["frame_index"])] = (eb, rgb)
    return out
