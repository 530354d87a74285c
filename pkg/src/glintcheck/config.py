"""Pipeline configuration: JSON file, then command-line overrides, then defaults."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .brdf import SkinReflectance
from .errors import GlintError
from .eye import EyeGeometry
from .geometry import PinholeCamera
from .morph import MorphConfig


class ConfigError(GlintError):
    stage = "config"


@dataclass(frozen=True)
class Thresholds:
    sat_threshold: float = 0.12
    value_floor: float = 0.65
    min_component_size: int = 4
    binarize: float = 0.5
    accept: float = 0.7
    match_radius_px: float = 25.0
    nose_dilate_px: float = 10.0
    eye_pair_max_deg: float = 20.0

    def __post_init__(self):
        for name in ("sat_threshold", "value_floor", "binarize", "accept"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.min_component_size < 1:
            raise ValueError("min_component_size must be at least 1")
        if self.match_radius_px < 0 or self.nose_dilate_px < 0 or self.eye_pair_max_deg < 0:
            raise ValueError("radii and angles must be non-negative")


@dataclass(frozen=True)
class CameraConfig:
    focal_px: float | None = None
    principal_point: tuple[float, float] | None = None

    def build(self, width: int, height: int) -> PinholeCamera:
        if self.focal_px is None:
            raise ConfigError("camera.focal_px is required")
        if self.principal_point is None:
            return PinholeCamera.centered(self.focal_px, width, height)
        return PinholeCamera(self.focal_px, tuple(self.principal_point), (width, height))


@dataclass(frozen=True)
class PipelineConfig:
    camera: CameraConfig = field(default_factory=CameraConfig)
    eye: EyeGeometry = field(default_factory=EyeGeometry)
    skin: SkinReflectance = field(default_factory=SkinReflectance)
    thresholds: Thresholds = field(default_factory=Thresholds)
    morph: MorphConfig = field(default_factory=MorphConfig)
    face_depth_mm: float = 600.0
    nose_prefix: str = "nose"
    workers: int = 1

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "camera": CameraConfig,
    "eye": EyeGeometry,
    "skin": SkinReflectance,
    "thresholds": Thresholds,
    "morph": MorphConfig,
}


def config_from_dict(data: dict) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            cls = _SECTIONS[key]
            known = {f.name for f in fields(cls)}
            if not isinstance(value, dict) or set(value) - known:
                raise ConfigError(f"{key}: unknown fields {sorted(set(value) - known) if isinstance(value, dict) else value}")
            try:
                kwargs[key] = cls(**value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{key}: {exc}") from None
        elif key in ("face_depth_mm", "nose_prefix", "workers"):
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return PipelineConfig(**kwargs)


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Load ``path`` (if any) and apply dotted-key ``overrides`` such as ``{"camera.focal_px": 2000}``."""
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = data
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return config_from_dict(data)
