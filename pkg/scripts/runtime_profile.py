#!/usr/bin/env python3
"""Per-stage timing of the late-fusion frame path at full sensor resolution."""
import argparse
import sys
import time

import numpy as np

from evfuse.config import PipelineConfig
from evfuse.core import Affine2D, Detection, Event
from evfuse.events import EventWindow, accumulate_frame, filter_noise_events
from evfuse.fusion import simple_late_fusion, transform_eb_detections
from evfuse.rgbmotion import (BackgroundModel, combine_motion, to_grayscale,
                              two_frame_motion)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    parser.add_argument("--events", type=int, default=5000)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    cfg = PipelineConfig()
    h, w = 1200, 1920
    frames = [rng.integers(0, 256, (h, w, 3)).astype(np.uint8) for _ in range(2)]
    model = BackgroundModel(w, h, history=cfg.knn.history,
                            match_threshold=cfg.knn.match_threshold,
                            min_matches=cfg.knn.min_matches)
    calib = Affine2D.from_scale_translation(3.0, 3.0, 0.0, 0.0)
    events = [Event(int(x), int(y), int(t), int(p))
              for x, y, t, p in zip(rng.integers(0, 640, args.events),
                                    rng.integers(0, 480, args.events),
                                    np.sort(rng.integers(0, 5000, args.events)),
                                    rng.choice((-1, 1), args.events))]
    rgb_dets = [Detection(class_id=2, cx=float(x), cy=float(y), w=60, h=40,
                          confidence=0.8)
                for x, y in rng.uniform(100, 1000, (6, 2))]
    eb_dets = [Detection(class_id=2, cx=float(x), cy=float(y), w=20, h=14,
                         confidence=0.7, source="event")
               for x, y in rng.uniform(30, 300, (4, 2))]

    prev_gray = to_grayscale(frames[0])
    model.foreground_mask(prev_gray)
    stages: dict[str, list[float]] = {}

    def timed(name, fn):
        t0 = time.perf_counter()
        out = fn()
        stages.setdefault(name, []).append((time.perf_counter() - t0) * 1e3)
        return out

    for _ in range(args.repeats):
        gray = timed("grayscale", lambda: to_grayscale(frames[1]))
        motion = timed("frame_diff", lambda: two_frame_motion(
            gray, prev_gray, cfg.motion_gate.diff_threshold))
        knn = timed("knn_background", lambda: model.foreground_mask(gray))
        motion = timed("combine", lambda: combine_motion(motion, knn))
        kept = timed("event_filter", lambda: filter_noise_events(
            events, cfg.noise_filter))
        timed("accumulate", lambda: accumulate_frame(
            EventWindow(kept, width=640, height=480, window_us=5000)))
        eb_in_rgb = timed("transform_dets", lambda: transform_eb_detections(
            eb_dets, calib))
        timed("slf", lambda: simple_late_fusion(rgb_dets, eb_in_rgb, motion,
                                                cfg.fusion))

    total = 0.0
    print(f"{'stage':>16} {'median ms':>10}")
    for name, values in stages.items():
        med = float(np.median(values))
        total += med
        print(f"{name:>16} {med:>10.2f}")
    print(f"{'total':>16} {total:>10.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
