"""Aggregated pipeline configuration with file loading and flag overrides.

Precedence: built-in defaults < config file < command-line overrides.
"""
from __future__ import annotations

import json

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any

from .calibration import CalibrationConfig, DbscanConfig, IcpConfig, RansacConfig
from .evaluation import EvalConfig
from .events import NoiseFilterConfig
from .fusion import FusionConfig
from .rgbmotion import MotionGateConfig
from .tracking import SortConfig


@dataclass(frozen=True)
class KnnConfig:
    history: int = 10
    match_threshold: int = 20
    min_matches: int = 2


@dataclass(frozen=True)
class CannyConfig:
    low: float = 50.0
    high: float = 150.0


@dataclass(frozen=True)
class FlowConfig:
    max_corners: int = 200
    quality_level: float = 0.01
    min_distance: float = 10.0
    pyramid_levels: int = 3
    window_size: int = 21


@dataclass(frozen=True)
class ShakeConfig:
    enabled: bool = False
    min_object_fraction: float = 0.5
    min_mean_length: float = 2.0


@dataclass(frozen=True)
class PipelineConfig:
    window_us: int = 5000
    noise_filter: NoiseFilterConfig = field(default_factory=NoiseFilterConfig)
    knn: KnnConfig = field(default_factory=KnnConfig)
    motion_gate: MotionGateConfig = field(default_factory=MotionGateConfig)
    canny: CannyConfig = field(default_factory=CannyConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    shake: ShakeConfig = field(default_factory=ShakeConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    sort: SortConfig = field(default_factory=SortConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


_NESTED_TYPES = {
    "noise_filter": NoiseFilterConfig,
    "knn": KnnConfig,
    "motion_gate": MotionGateConfig,
    "canny": CannyConfig,
    "flow": FlowConfig,
    "shake": ShakeConfig,
    "calibration": CalibrationConfig,
    "sort": SortConfig,
    "fusion": FusionConfig,
    "eval": EvalConfig,
}
_CALIBRATION_NESTED = {
    "dbscan_eb": DbscanConfig,
    "dbscan_rgb": DbscanConfig,
    "ransac": RansacConfig,
    "icp": IcpConfig,
}


def config_to_dict(cfg: Any) -> Any:
    if is_dataclass(cfg):
        return {f.name: config_to_dict(getattr(cfg, f.name)) for f in fields(cfg)}
    if isinstance(cfg, (list, tuple)):
        return [config_to_dict(v) for v in cfg]
    return cfg


def _build(cls, data: dict, context: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys under {context}: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if cls is PipelineConfig and key in _NESTED_TYPES and isinstance(value, dict):
            kwargs[key] = _build(_NESTED_TYPES[key], value, f"{context}.{key}")
        elif cls is CalibrationConfig and key in _CALIBRATION_NESTED \
                and isinstance(value, dict):
            kwargs[key] = _build(_CALIBRATION_NESTED[key], value, f"{context}.{key}")
        else:
            kwargs[key] = value
    return cls(**kwargs)


def pipeline_config_from_dict(data: dict) -> PipelineConfig:
    return _build(PipelineConfig, data, "config")


def load_pipeline_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if path.suffix == ".toml":
        with open(path, "rb") as f:
            data = tomllib.load(f)
    else:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    return pipeline_config_from_dict(data)


def apply_overrides(cfg: PipelineConfig, overrides: list[str]) -> PipelineConfig:
    """Apply `section.key=value` overrides; values parse as JSON literals
    with a plain-string fallback."""
    data = config_to_dict(cfg)
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} must look like key.path=value")
        dotted, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = dotted.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ValueError(f"unknown config section {dotted!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ValueError(f"unknown config key {dotted!r}")
        node[parts[-1]] = value
    return pipeline_config_from_dict(data)
