"""The detection workflow: eye lights, pose fit, synthesis, comparison."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .config import PipelineConfig
from .errors import AllZeroMap, EmptyEstimate, GlintError
from .eye import (
    EyeAnnotation,
    EyePose,
    LightEstimate,
    estimate_light_direction,
    fit_eye_pose,
    init_eye_pose,
    merge_light_estimates,
)
from .geometry import PinholeCamera, RigidTransform, TriangleMesh
from .highlights import (
    ComparisonReport,
    HighlightMask,
    SpecularMap,
    binarize,
    compare_masks,
    detect_highlights,
    overlay,
    region_from_points,
    synthesize_highlights,
)
from .imageio import RasterImage
from .pose import NormalMap, fit_mesh_pose, initial_face_pose, rasterize_normals


class StageFailure(GlintError):
    """A pipeline stage failed; ``stage`` names it and ``cause`` holds the original error."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class EyeResult:
    pose: EyePose
    highlights: np.ndarray
    directions: np.ndarray


def limbus_region(ann: EyeAnnotation, width: int, height: int) -> np.ndarray:
    center, radius = ann.limbus_circle()
    vv, uu = np.mgrid[0:height, 0:width]
    return (uu - center[0]) ** 2 + (vv - center[1]) ** 2 <= radius**2


def eye_highlight_pixels(img: RasterImage, ann: EyeAnnotation, cfg: PipelineConfig) -> np.ndarray:
    """Annotated catch-light centres, or detected ones inside the limbus disk."""
    if len(ann.highlight_pixels):
        return ann.highlight_pixels
    th = cfg.thresholds
    mask = detect_highlights(
        img, limbus_region(ann, img.width, img.height), th.sat_threshold, th.value_floor, th.min_component_size
    )
    return np.array([c.centroid for c in mask.components], dtype=float).reshape(-1, 2)


def estimate_lights(
    img: RasterImage, annotations: Mapping[str, EyeAnnotation], camera: PinholeCamera, cfg: PipelineConfig
) -> tuple[LightEstimate, dict[str, EyeResult]]:
    per_eye: dict[str, EyeResult] = {}
    for side in sorted(annotations):
        ann = annotations[side]
        try:
            pose = fit_eye_pose(init_eye_pose(ann, camera, cfg.eye), ann, camera, cfg.eye)
            pix = eye_highlight_pixels(img, ann, cfg)
            dirs = np.array([estimate_light_direction(pose, p, camera, cfg.eye) for p in pix]).reshape(-1, 3)
        except GlintError as exc:
            raise StageFailure(f"{side} eye", exc) from exc
        per_eye[side] = EyeResult(pose, pix, dirs)
    left = list(per_eye["left"].directions) if "left" in per_eye else []
    right = list(per_eye["right"].directions) if "right" in per_eye else []
    extra = [d for side, r in per_eye.items() if side not in ("left", "right") for d in r.directions]
    merged = merge_light_estimates(left, right + extra, cfg.thresholds.eye_pair_max_deg)
    return merged, per_eye


@dataclass
class VerifyResult:
    report: ComparisonReport | None
    decision: str  # consistent | inconsistent | inconclusive
    lights: LightEstimate
    pose: RigidTransform
    normal_map: NormalMap
    specular: SpecularMap
    detected: HighlightMask
    synthetic: HighlightMask
    overlay: RasterImage
    region: np.ndarray

    def to_dict(self, cfg: PipelineConfig) -> dict:
        th = cfg.thresholds
        out = {
            "decision": self.decision,
            "decision_score": None if self.report is None else self.report.decision_score,
            "accept_threshold": th.accept,
            "comparison": None if self.report is None else self.report.to_dict(),
            "thresholds": {
                "sat_threshold": th.sat_threshold,
                "value_floor": th.value_floor,
                "min_component_size": th.min_component_size,
                "binarize": th.binarize,
                "match_radius_px": th.match_radius_px,
                "nose_dilate_px": th.nose_dilate_px,
                "eye_pair_max_deg": th.eye_pair_max_deg,
            },
            "lights": {
                "directions": self.lights.directions.tolist(),
                "per_eye_residuals_deg": self.lights.per_eye_residuals,
            },
            "pose": {"rotation": self.pose.rotation.tolist(), "translation": self.pose.translation.tolist()},
            "skin": {"rho_s": cfg.skin.rho_s, "m": cfg.skin.m, "refraction_index": cfg.skin.refraction_index},
        }
        return out


def verify(
    img: RasterImage,
    annotations: Mapping[str, EyeAnnotation],
    mesh: TriangleMesh,
    landmarks: Mapping[str, tuple[float, float]],
    camera: PinholeCamera,
    cfg: PipelineConfig,
) -> VerifyResult:
    """Run all four stages and compare synthetic with detected nose highlights."""
    th = cfg.thresholds
    try:
        lights, _ = estimate_lights(img, annotations, camera, cfg)
    except StageFailure as exc:
        if not isinstance(exc.cause, EmptyEstimate):
            raise
        lights = LightEstimate(np.zeros((0, 3)), [])
    except EmptyEstimate:
        lights = LightEstimate(np.zeros((0, 3)), [])

    try:
        init = initial_face_pose(mesh, landmarks, camera, cfg.face_depth_mm)
        pose = fit_mesh_pose(mesh, landmarks, camera, init)
    except GlintError as exc:
        raise StageFailure("pose fit", exc) from exc
    try:
        nmap = rasterize_normals(mesh, pose, camera, workers=cfg.workers)
    except GlintError as exc:
        raise StageFailure("rasterize", exc) from exc

    nose_pts = [p for name, p in landmarks.items() if name.startswith(cfg.nose_prefix)]
    if len(nose_pts) < 3:
        raise StageFailure("nose region", GlintError(f"need 3 landmarks named {cfg.nose_prefix}*, got {len(nose_pts)}"))
    region = region_from_points(nose_pts, camera.width, camera.height, th.nose_dilate_px)

    try:
        specular = synthesize_highlights(nmap, lights, camera, cfg.skin)
    except GlintError as exc:
        raise StageFailure("synthesis", exc) from exc
    restricted = SpecularMap(np.where(region, specular.intensity, 0.0))
    try:
        synthetic = binarize(restricted, th.binarize)
    except AllZeroMap:
        synthetic = HighlightMask.from_bits(np.zeros(region.shape, dtype=bool))
    detected = detect_highlights(img, region, th.sat_threshold, th.value_floor, th.min_component_size)
    painted = overlay(detected, synthetic, img)

    report = compare_masks(detected, synthetic, th.match_radius_px)  # BothEmpty propagates
    decision = "consistent" if report.decision_score >= th.accept else "inconsistent"
    return VerifyResult(report, decision, lights, pose, nmap, specular, detected, synthetic, painted, region)
