"""Targetless event-camera/RGB calibration and detection-level fusion toolkit."""

__version__ = "0.1.0"

from .core import (Affine2D, Detection, EdgeCloud, Event, Rect, apply_affine,
                   iou, transform_detection)
from .calibration import (CalibrationConfig, CalibrationResult, DbscanConfig,
                          calibrate_frame, cluster_points, reprojection_error,
                          solve_assignment)
from .events import EventWindow, NoiseFilterConfig, accumulate_frame, \
    binarize_motion, enhance_edges, filter_noise_events
from .fusion import (FusedObject, FusionConfig, StlfState, blend_early,
                     fuse_pair, simple_late_fusion, spatiotemporal_late_fusion)
from .tracking import SortConfig, SortTracker
from .evaluation import EvalConfig, evaluate_detections, generate_pseudo_labels
from .synth import EventModelConfig, ObjectSpec, SceneConfig, generate_scene

__all__ = [
    "Affine2D", "Detection", "EdgeCloud", "Event", "Rect", "apply_affine",
    "iou", "transform_detection",
    "CalibrationConfig", "CalibrationResult", "DbscanConfig", "calibrate_frame",
    "cluster_points", "reprojection_error", "solve_assignment",
    "EventWindow", "NoiseFilterConfig", "accumulate_frame", "binarize_motion",
    "enhance_edges", "filter_noise_events",
    "FusedObject", "FusionConfig", "StlfState", "blend_early", "fuse_pair",
    "simple_late_fusion", "spatiotemporal_late_fusion",
    "SortConfig", "SortTracker",
    "EvalConfig", "evaluate_detections", "generate_pseudo_labels",
    "EventModelConfig", "ObjectSpec", "SceneConfig", "generate_scene",
    "__version__",
]
