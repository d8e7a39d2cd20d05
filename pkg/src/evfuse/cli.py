"""Batch command-line front end.

Subcommands: calibrate, fuse, eval, pseudo-label, synth, filter-events.
Every run writes a run.json with the resolved configuration, and failures
leave a machine-readable error.json in the output directory.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from . import __version__, dataset_io
from .config import (PipelineConfig, apply_overrides, config_to_dict,
                     load_pipeline_config)
from .core import Affine2D, CLASS_NAMES, Detection, apply_affine
from .evaluation import evaluate_detections, generate_pseudo_labels
from .events import NoiseFilterConfig, filter_noise_events
from .fusion import PROV_BOTH, PROV_EB_ONLY, PROV_RGB_ONLY, blend_early, \
    warp_event_image
from .pipeline import (EventStreamProcessor, FusionSession,
                       calibrate_sequence, select_best_calibration)
from .rgbmotion import compute_sparse_flow
from .synth import (EventModelConfig, NoiseSpec, ObjectSpec, SceneConfig,
                    generate_scene, write_scene)

PROVENANCE_COLORS = {PROV_BOTH: (0, 200, 0), PROV_RGB_ONLY: (40, 80, 255),
                     PROV_EB_ONLY: (230, 40, 40)}


class CliError(Exception):
    pass


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if getattr(args, "config", None):
        cfg = load_pipeline_config(args.config)
    overrides = getattr(args, "set", None) or []
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def _write_run_record(outdir: Path, command: str, cfg: PipelineConfig | None,
                      extra: dict | None = None) -> None:
    record = {"tool": "evfuse", "version": __version__, "command": command}
    if cfg is not None:
        record["config"] = config_to_dict(cfg)
    if extra:
        record.update(extra)
    dataset_io.write_json_atomic(outdir / "run.json", record)


def _fail(outdir: Path | None, exc: Exception) -> int:
    message = {"error": type(exc).__name__, "message": str(exc)}
    if outdir is not None:
        try:
            dataset_io.write_json_atomic(outdir / "error.json", message)
        except OSError:
            pass
    print(f"error: {exc}", file=sys.stderr)
    return 1


def _require(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(f"{what} not found: {p}")
    return p


def _load_frames(manifest: dataset_io.SequenceManifest) -> list[np.ndarray]:
    frames = []
    for entry in manifest.frames:
        frames.append(dataset_io.load_image_png(_require(
            manifest.resolve(entry.rgb), f"frame {entry.index}")))
    return frames


def _draw_fused_overlay(frame: np.ndarray, objects, annotate_ids: bool) -> np.ndarray:
    img = Image.fromarray(frame if frame.ndim == 3 else
                          np.repeat(frame[:, :, None], 3, axis=2))
    draw = ImageDraw.Draw(img)
    for obj in objects:
        det = obj.detection
        r = det.rect()
        color = PROVENANCE_COLORS[obj.provenance]
        draw.rectangle([r.x0, r.y0, r.x1, r.y1], outline=color, width=2)
        label = det.class_name
        if annotate_ids and obj.track_id is not None:
            label = f"#{obj.track_id} {label}"
        draw.text((r.x0 + 2, max(r.y0 - 11, 0)), label, fill=color)
    return np.asarray(img)


def _draw_point_overlay(frame: np.ndarray, points: np.ndarray) -> np.ndarray:
    img = frame.copy() if frame.ndim == 3 else np.repeat(frame[:, :, None], 3, axis=2)
    h, w = img.shape[:2]
    xs = np.rint(points[:, 0]).astype(int)
    ys = np.rint(points[:, 1]).astype(int)
    keep = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    img[ys[keep], xs[keep]] = (255, 40, 40)
    return img


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args) -> int:
    outdir = Path(args.out)
    try:
        if args.scene:
            with open(args.scene, "r", encoding="utf-8") as f:
                raw = json.load(f)
            if args.seed is not None:
                raw["seed"] = args.seed
            scene_cfg = _scene_config_from_dict(raw)
        else:
            scene_cfg = _default_scene_config(args.seed if args.seed is not None else 0)
        ev_cfg = EventModelConfig()
        scene = generate_scene(scene_cfg, ev_cfg)
        write_scene(scene, outdir, name=args.name)
        _write_run_record(outdir, "synth", None, {
            "scene": _scene_config_to_dict(scene_cfg), "seed": scene_cfg.seed})
    except Exception as exc:  # noqa: BLE001 - single CLI failure funnel
        return _fail(outdir, exc)
    print(f"wrote synthetic sequence to {outdir}")
    return 0


def _default_scene_config(seed: int) -> SceneConfig:
    truth = Affine2D.from_scale_translation(3.0, 3.0, 12.0, -8.0)
    objects = [ObjectSpec(shape="rectangle", size=(150.0, 105.0),
                          velocity=(7.5, -5.0), intensity=210,
                          start=(420.0, 400.0), texture_amplitude=12.0,
                          texture_period=16.0)]
    return SceneConfig(seed=seed, ground_truth=truth, objects=objects,
                       rgb_resolution=(960, 600), eb_resolution=(320, 200),
                       frames=10, frame_interval_us=5000,
                       background_texture_amplitude=25.0)


def _scene_config_from_dict(raw: dict) -> SceneConfig:
    matrix = np.array(raw["ground_truth"], dtype=np.float64).reshape(3, 3)
    objects = [ObjectSpec(**obj) for obj in raw["objects"]]
    for obj in objects:
        object.__setattr__(obj, "size", tuple(obj.size))
        object.__setattr__(obj, "velocity", tuple(obj.velocity))
        object.__setattr__(obj, "start", tuple(obj.start))
    noise = NoiseSpec(**raw.get("noise", {}))
    return SceneConfig(seed=int(raw["seed"]), ground_truth=Affine2D(matrix),
                       objects=objects,
                       rgb_resolution=tuple(raw.get("rgb_resolution", (1920, 1200))),
                       eb_resolution=tuple(raw.get("eb_resolution", (640, 480))),
                       frames=int(raw.get("frames", 10)),
                       frame_interval_us=int(raw.get("frame_interval_us", 5000)),
                       accumulation_window_us=raw.get("accumulation_window_us", 5000),
                       background=int(raw.get("background", 40)),
                       background_texture_amplitude=float(
                           raw.get("background_texture_amplitude", 0.0)),
                       background_texture_pitch=int(
                           raw.get("background_texture_pitch", 48)),
                       noise=noise)


def _scene_config_to_dict(cfg: SceneConfig) -> dict:
    return {"seed": cfg.seed,
            "ground_truth": cfg.ground_truth.m.reshape(-1).tolist(),
            "objects": [{"shape": o.shape, "size": list(o.size),
                         "velocity": list(o.velocity), "intensity": o.intensity,
                         "start": list(o.start), "start_frame": o.start_frame,
                         "class_id": o.class_id,
                         "detection_confidence": o.detection_confidence,
                         "texture_amplitude": o.texture_amplitude,
                         "texture_period": o.texture_period}
                        for o in cfg.objects],
            "rgb_resolution": list(cfg.rgb_resolution),
            "eb_resolution": list(cfg.eb_resolution),
            "frames": cfg.frames, "frame_interval_us": cfg.frame_interval_us,
            "accumulation_window_us": cfg.accumulation_window_us,
            "background": cfg.background,
            "background_texture_amplitude": cfg.background_texture_amplitude,
            "background_texture_pitch": cfg.background_texture_pitch,
            "noise": {"event_noise_rate": cfg.noise.event_noise_rate,
                      "rgb_gaussian_sigma": cfg.noise.rgb_gaussian_sigma}}


def cmd_calibrate(args) -> int:
    outdir = Path(args.out)
    try:
        cfg = _load_config(args)
        manifest = dataset_io.load_manifest(_require(args.manifest, "manifest"))
        events = dataset_io.load_events(_require(
            manifest.resolve(manifest.events), "event file"),
            resolution=manifest.eb_resolution)
        frames = _load_frames(manifest)
        correspondences = None
        if manifest.correspondences:
            correspondences = dataset_io.load_correspondences(
                manifest.resolve(manifest.correspondences))
        seg_masks = None
        if manifest.masks:
            seg_masks = dataset_io.load_segmentation_masks(
                manifest.resolve(manifest.masks))
        spans = [(f.t0_us, f.t1_us) for f in manifest.frames]

        t_start = time.monotonic()
        results = calibrate_sequence(frames, spans, events, cfg,
                                     manifest.eb_resolution,
                                     correspondences=correspondences,
                                     seg_masks=seg_masks)
        for fc in results:
            print(f"frame {fc.index}: {fc.elapsed_s * 1e3:.1f} ms "
                  f"({fc.error or 'ok'})", file=sys.stderr)
        print(f"calibrated {len(results)} frames in "
              f"{time.monotonic() - t_start:.2f}s", file=sys.stderr)

        rows = []
        for fc in results:
            err_col = "n/a" if fc.reprojection_px is None else repr(fc.reprojection_px)
            if fc.result is not None:
                d = fc.result.diagnostics
                rows.append([fc.index, "ok", d.eb_clusters, d.rgb_clusters,
                             d.matched_pairs, d.pooled_correspondences,
                             fc.result.inlier_count, err_col])
                dataset_io.save_calibration(
                    fc.result.transform,
                    {"source_resolution": manifest.eb_resolution,
                     "target_resolution": manifest.rgb_resolution,
                     "created_by": f"evfuse {__version__} frame {fc.index}"},
                    outdir / "transforms" / f"{fc.index:06d}.json")
            else:
                rows.append([fc.index, fc.error, 0, 0, 0, 0, 0, err_col])
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["frame", "status", "eb_clusters", "rgb_clusters",
                         "matched_pairs", "pooled", "inliers", "reprojection_px"])
        writer.writerows(rows)
        dataset_io.write_text_atomic(outdir / "diagnostics.csv", buf.getvalue())

        best = select_best_calibration(results)
        if best is None:
            raise CliError("calibration failed on every frame")
        dataset_io.save_calibration(
            best.result.transform,
            {"source_resolution": manifest.eb_resolution,
             "target_resolution": manifest.rgb_resolution,
             "created_by": f"evfuse {__version__} best frame {best.index}"},
            outdir / "calibration.json")

        if args.overlay:
            eb_proc = EventStreamProcessor(cfg, manifest.eb_resolution, events)
            for fc in results:
                if fc.result is None:
                    continue
                t0, t1 = spans[fc.index]
                cloud = eb_proc.edge_cloud(t0, t1)
                warped = apply_affine(fc.result.transform, cloud.points)
                overlay = _draw_point_overlay(frames[fc.index], warped)
                dataset_io.save_image_png(
                    overlay, outdir / "overlay" / f"{fc.index:06d}.png")
        _write_run_record(outdir, "calibrate", cfg,
                          {"manifest": Path(args.manifest).name,
                           "best_frame": best.index})
    except Exception as exc:  # noqa: BLE001
        return _fail(outdir, exc)
    print(f"wrote calibration to {outdir}")
    return 0


def cmd_fuse(args) -> int:
    outdir = Path(args.out)
    try:
        cfg = _load_config(args)
        manifest = dataset_io.load_manifest(_require(args.manifest, "manifest"))
        calib, _ = dataset_io.load_calibration(_require(args.calibration,
                                                        "calibration file"))
        frames = _load_frames(manifest)
        spans = [(f.t0_us, f.t1_us) for f in manifest.frames]
        events = dataset_io.load_events(
            _require(manifest.resolve(manifest.events), "event file"),
            resolution=manifest.eb_resolution)

        if args.mode == "early":
            eb_proc = EventStreamProcessor(cfg, manifest.eb_resolution, events)
            for entry, frame in zip(manifest.frames, frames):
                eb_gray = eb_proc.accumulated(entry.t0_us, entry.t1_us)
                warped = warp_event_image(eb_gray, calib,
                                          (frame.shape[0], frame.shape[1]))
                eb_rgbized = np.repeat(warped[:, :, None], 3, axis=2)
                blended = blend_early(eb_rgbized, frame, cfg.fusion.blend_alpha)
                dataset_io.save_image_png(
                    blended, outdir / "blended" / f"{entry.index:06d}.png")
            _write_run_record(outdir, "fuse", cfg, {"mode": "early"})
            print(f"wrote blended frames to {outdir}")
            return 0

        dets_rgb_path = args.detections_rgb or (
            manifest.resolve(manifest.detections_rgb) if manifest.detections_rgb else None)
        dets_eb_path = args.detections_eb or (
            manifest.resolve(manifest.detections_eb) if manifest.detections_eb else None)
        if not dets_rgb_path or not dets_eb_path:
            raise CliError("late fusion needs --detections-rgb and --detections-eb")
        dets_rgb = dataset_io.load_detections(_require(dets_rgb_path, "RGB detections"),
                                              source="rgb")
        dets_eb = dataset_io.load_detections(_require(dets_eb_path, "event detections"),
                                             source="event")
        frame_indices = {f.index for f in manifest.frames}
        for name, dets in (("rgb", dets_rgb), ("event", dets_eb)):
            missing = set(dets) - frame_indices
            if missing:
                raise CliError(f"{name} detections reference unknown frames "
                               f"{sorted(missing)[:5]}")

        session = FusionSession(cfg, manifest.rgb_resolution,
                                manifest.eb_resolution, calib, mode=args.mode)
        out_frames = []
        timings = []
        for entry, frame in zip(manifest.frames, frames):
            t0 = time.monotonic()
            fused = session.process(frame, dets_rgb.get(entry.index, []),
                                    dets_eb.get(entry.index, []))
            timings.append(time.monotonic() - t0)
            out_frames.append({
                "frame_index": entry.index,
                "objects": [{
                    "class_id": o.detection.class_id,
                    "cx": o.detection.cx, "cy": o.detection.cy,
                    "w": o.detection.w, "h": o.detection.h,
                    "confidence": o.detection.confidence,
                    "provenance": o.provenance,
                    "moving": o.detection.moving,
                    "track_id": o.track_id,
                    "trusted": o.trusted,
                } for o in fused.objects],
            })
            if args.overlay:
                overlay = _draw_fused_overlay(frame, fused.objects,
                                              annotate_ids=args.mode == "stlf")
                dataset_io.save_image_png(
                    overlay, outdir / "overlay" / f"{entry.index:06d}.png")
        dataset_io.write_json_atomic(outdir / "fused.json", out_frames)
        for entry, dt in zip(manifest.frames, timings):
            print(f"frame {entry.index}: {dt * 1e3:.1f} ms", file=sys.stderr)
        print(f"median frame time {np.median(timings) * 1e3:.1f} ms",
              file=sys.stderr)
        _write_run_record(outdir, "fuse", cfg, {"mode": args.mode})
    except Exception as exc:  # noqa: BLE001
        return _fail(outdir, exc)
    print(f"wrote fused detections to {outdir}")
    return 0


def _load_label_file(path: Path, source: str) -> dict[int, list[Detection]]:
    """Accept OpenLABEL labels, plain detection files, or fusion output."""
    with open(path, "r", encoding="utf-8") as f:
        head = json.load(f)
    if isinstance(head, dict) and "openlabel" in head:
        return dataset_io.load_labels_openlabel(path, source=source)
    if isinstance(head, list) and head and "objects" in head[0]:
        out: dict[int, list[Detection]] = {}
        for frame in head:
            out[int(frame["frame_index"])] = [
                Detection(class_id=int(o["class_id"]), cx=float(o["cx"]),
                          cy=float(o["cy"]), w=float(o["w"]), h=float(o["h"]),
                          confidence=float(o["confidence"]), source="fused",
                          moving=bool(o.get("moving", False)))
                for o in frame["objects"]]
        return out
    return dataset_io.load_detections(path, source=source)


def cmd_eval(args) -> int:
    outdir = Path(args.out)
    try:
        cfg = _load_config(args)
        det_paths = [Path(p) for p in args.detections]
        label_paths = [Path(p) for p in args.labels]
        if len(det_paths) != len(label_paths):
            raise CliError("--detections and --labels must pair up")
        manifests = [dataset_io.load_manifest(_require(m, "manifest"))
                     for m in (args.manifest or [])]
        if manifests and len(manifests) != len(det_paths):
            raise CliError("--manifest count must match --detections")

        subsets: dict[str, tuple[dict, dict]] = {}
        for i, (dp, lp) in enumerate(zip(det_paths, label_paths)):
            tag = manifests[i].illumination if manifests else "all"
            dets = _load_label_file(_require(dp, "detections"), "rgb")
            labels = _load_label_file(_require(lp, "labels"), "rgb")
            if not set(dets) & set(labels):
                raise CliError(f"no overlapping frames between {dp} and {lp}")
            base = 100000 * i  # keep frame indices of different sequences apart
            tgt_d, tgt_l = subsets.setdefault(tag, ({}, {}))
            tgt_d.update({base + k: v for k, v in dets.items()})
            tgt_l.update({base + k: v for k, v in labels.items()})

        report = {}
        csv_rows = []
        pr_rows = []
        for tag in sorted(subsets):
            dets, labels = subsets[tag]
            result = evaluate_detections(dets, labels, cfg.eval)
            classes = []
            for m in result.per_class:
                if m.n_gt == 0 and m.tp + m.fp == 0:
                    continue
                classes.append({"class_id": m.class_id,
                                "class_name": CLASS_NAMES[m.class_id],
                                "ap": m.ap, "precision": m.precision,
                                "recall": m.recall, "tp": m.tp, "fp": m.fp,
                                "fn": m.fn, "n_gt": m.n_gt})
                csv_rows.append([tag, CLASS_NAMES[m.class_id],
                                 "n/a" if m.ap is None else repr(m.ap),
                                 repr(m.precision), repr(m.recall),
                                 m.tp, m.fp, m.fn])
                for r, p in m.pr_points:
                    pr_rows.append([tag, CLASS_NAMES[m.class_id], repr(r), repr(p)])
            report[tag] = {"classes": classes, "map": result.mean_ap}

        dataset_io.write_json_atomic(outdir / "metrics.json", report)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["subset", "class", "ap", "precision", "recall",
                         "tp", "fp", "fn"])
        writer.writerows(csv_rows)
        dataset_io.write_text_atomic(outdir / "metrics.csv", buf.getvalue())
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["subset", "class", "recall", "precision"])
        writer.writerows(pr_rows)
        dataset_io.write_text_atomic(outdir / "pr_curves.csv", buf.getvalue())
        _write_run_record(outdir, "eval", cfg)
    except Exception as exc:  # noqa: BLE001
        return _fail(outdir, exc)
    print(f"wrote metrics to {outdir}")
    return 0


def cmd_pseudo_label(args) -> int:
    outdir = Path(args.out)
    try:
        cfg = _load_config(args)
        manifest = dataset_io.load_manifest(_require(args.manifest, "manifest"))
        calib, _ = dataset_io.load_calibration(_require(args.calibration,
                                                        "calibration file"))
        dets_path = args.detections_rgb or (
            manifest.resolve(manifest.detections_rgb) if manifest.detections_rgb else None)
        if not dets_path:
            raise CliError("pseudo-label needs --detections-rgb")
        dets = dataset_io.load_detections(_require(dets_path, "RGB detections"),
                                          source="rgb")
        frames = _load_frames(manifest)
        grays = [f if f.ndim == 2 else None for f in frames]
        from .rgbmotion import to_grayscale
        grays = [to_grayscale(f) if g is None else g
                 for f, g in zip(frames, grays)]

        labels_rgb: dict[int, list[Detection]] = {}
        labels_eb: dict[int, list[Detection]] = {}
        for i, entry in enumerate(manifest.frames):
            flow = []
            if i > 0:
                flow = compute_sparse_flow(
                    grays[i - 1], grays[i],
                    max_corners=cfg.flow.max_corners,
                    quality_level=cfg.flow.quality_level,
                    min_distance=cfg.flow.min_distance,
                    pyramid_levels=cfg.flow.pyramid_levels,
                    window_size=cfg.flow.window_size)
            frame_dets = dets.get(entry.index, [])
            rgb_labels, eb_labels = generate_pseudo_labels(
                frame_dets, calib, flow, cfg.eval, manifest.eb_resolution,
                flow_margin=cfg.motion_gate.flow_margin)
            labels_rgb[entry.index] = rgb_labels
            labels_eb[entry.index] = eb_labels
        dataset_io.save_labels_openlabel(labels_rgb, outdir / "pseudo_labels_rgb.json")
        dataset_io.save_labels_openlabel(labels_eb, outdir / "pseudo_labels_eb.json")
        _write_run_record(outdir, "pseudo-label", cfg)
    except Exception as exc:  # noqa: BLE001
        return _fail(outdir, exc)
    print(f"wrote pseudo labels to {outdir}")
    return 0


def cmd_filter_events(args) -> int:
    out_path = Path(args.out)
    try:
        cfg = NoiseFilterConfig(r_x=args.rx, r_y=args.ry, r_t=args.rt,
                                min_events=args.min_events)
        events = dataset_io.load_events(_require(args.events, "event file"))
        kept = filter_noise_events(events, cfg)
        dataset_io.save_events(kept, out_path)
    except Exception as exc:  # noqa: BLE001
        return _fail(out_path.parent, exc)
    print(f"kept {len(kept)} of {len(events)} events -> {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evfuse",
        description="Targetless event/RGB calibration and detection fusion")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", help="pipeline config file (JSON or TOML)")
        p.add_argument("--set", action="append", metavar="KEY.PATH=VALUE",
                       help="override a config value (repeatable)")
        if out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic sequence")
    p.add_argument("--scene", help="scene config JSON (omit for the default scene)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--name", default="synthetic")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="targetless extrinsic calibration")
    p.add_argument("--manifest", required=True)
    overlay = p.add_mutually_exclusive_group()
    overlay.add_argument("--overlay", dest="overlay", action="store_true")
    overlay.add_argument("--no-overlay", dest="overlay", action="store_false")
    p.set_defaults(overlay=True)
    common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("fuse", help="early or late detection fusion")
    p.add_argument("--manifest", required=True)
    p.add_argument("--calibration", required=True)
    p.add_argument("--mode", choices=("early", "slf", "stlf"), required=True)
    p.add_argument("--detections-rgb")
    p.add_argument("--detections-eb")
    overlay = p.add_mutually_exclusive_group()
    overlay.add_argument("--overlay", dest="overlay", action="store_true")
    overlay.add_argument("--no-overlay", dest="overlay", action="store_false")
    p.set_defaults(overlay=True)
    common(p)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="detection metrics")
    p.add_argument("--detections", action="append", required=True)
    p.add_argument("--labels", action="append", required=True)
    p.add_argument("--manifest", action="append")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pseudo-label", help="generate pseudo labels")
    p.add_argument("--manifest", required=True)
    p.add_argument("--calibration", required=True)
    p.add_argument("--detections-rgb")
    common(p)
    p.set_defaults(func=cmd_pseudo_label)

    p = sub.add_parser("filter-events", help="standalone event noise filter")
    p.add_argument("--events", required=True)
    p.add_argument("--rx", type=int, default=2)
    p.add_argument("--ry", type=int, default=2)
    p.add_argument("--rt", type=int, default=10_000)
    p.add_argument("--min-events", type=int, default=30)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_filter_events)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
