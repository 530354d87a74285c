"""Command-line front end: ``glintcheck {estimate-lights,verify,morph,render}``.

Exit codes: 0 success, 2 input or stage error, 3 inconclusive comparison.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import PipelineConfig, load_config
from .errors import BothEmpty, GlintError, SceneFormatError
from .eye import EyeAnnotation
from .geometry import PinholeCamera
from .imageio import RasterImage, load_image, save_image
from .meshio import load_landmarks, load_obj
from .morph import MorphConfig, make_morph
from .oracle import render, scene_from_dict
from .pipeline import StageFailure, estimate_lights, verify

EXIT_OK, EXIT_ERROR, EXIT_INCONCLUSIVE = 0, 2, 3


class InputError(GlintError):
    stage = "input"


def _write_json(data, path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InputError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _require(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"file not found: {path}")
    return p


def load_annotations(path) -> dict[str, EyeAnnotation]:
    """``{"left": {"limbus": [[u, v], ...], "pupil": [...], "highlights": [...]}, "right": ...}``"""
    data = _read_json(path)
    if not isinstance(data, dict) or not data:
        raise InputError(f"{path}: expected an object keyed by eye name")
    out = {}
    for side, eye in data.items():
        try:
            out[side] = EyeAnnotation(
                np.asarray(eye["limbus"], dtype=float),
                np.asarray(eye["pupil"], dtype=float),
                np.asarray(eye.get("highlights", []), dtype=float),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{path}: {side} eye: malformed annotation ({exc})") from None
        except GlintError as exc:
            raise InputError(f"{path}: {side} eye: {exc}") from None
    return out


def save_annotations(annotations: dict[str, EyeAnnotation], path) -> None:
    _write_json(
        {
            side: {
                "limbus": a.limbus_points.tolist(),
                "pupil": a.pupil_points.tolist(),
                "highlights": a.highlight_pixels.tolist(),
            }
            for side, a in annotations.items()
        },
        path,
    )


def _image(path) -> RasterImage:
    return load_image(_require(path))


def _camera(cfg: PipelineConfig, img: RasterImage) -> PinholeCamera:
    return cfg.camera.build(img.width, img.height)


def _overrides(args) -> dict:
    out = {}
    for key, attr in (
        ("camera.focal_px", "focal_px"),
        ("thresholds.accept", "accept"),
        ("thresholds.binarize", "binarize"),
        ("morph.alpha", "alpha"),
        ("workers", "workers"),
    ):
        if getattr(args, attr, None) is not None:
            out[key] = getattr(args, attr)
    return out


def cmd_estimate_lights(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    img = _image(args.image)
    ann = load_annotations(_require(args.eyes))
    lights, per_eye = estimate_lights(img, ann, _camera(cfg, img), cfg)
    _write_json(
        {
            "directions": lights.directions.tolist(),
            "per_eye_residuals_deg": lights.per_eye_residuals,
            "eye_pair_max_deg": cfg.thresholds.eye_pair_max_deg,
            "eyes": {
                side: {
                    "center": r.pose.center.tolist(),
                    "gaze": r.pose.gaze.tolist(),
                    "pupil_radius": r.pose.pupil_radius,
                    "highlights": r.highlights.tolist(),
                    "directions": r.directions.tolist(),
                }
                for side, r in per_eye.items()
            },
        },
        args.out,
    )
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    img = _image(args.image)
    ann = load_annotations(_require(args.eyes))
    mesh = load_obj(_require(args.mesh), _require(args.tags) if args.tags else None)
    landmarks = load_landmarks(_require(args.landmarks))
    try:
        result = verify(img, ann, mesh, landmarks, _camera(cfg, img), cfg)
    except BothEmpty as exc:
        _write_json({"decision": "inconclusive", "reason": str(exc), "accept_threshold": cfg.thresholds.accept}, args.out)
        print(f"inconclusive: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    _write_json(result.to_dict(cfg), args.out)
    if args.overlay:
        save_image(result.overlay, args.overlay)
    print(f"{result.decision}: IoU {result.report.decision_score:.4f} (accept >= {cfg.thresholds.accept})")
    return EXIT_OK


def cmd_morph(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    img_a, img_b = _image(args.image_a), _image(args.image_b)
    lm_a, lm_b = load_landmarks(_require(args.landmarks_a)), load_landmarks(_require(args.landmarks_b))
    if set(lm_a) != set(lm_b):
        raise InputError(f"landmark names differ: {sorted(set(lm_a) ^ set(lm_b))}")
    names = sorted(lm_a)
    mcfg = MorphConfig(cfg.morph.alpha, tuple(tuple(map(tuple, p)) for p in cfg.morph.manual_extra_points))
    out = make_morph(img_a, img_b, [lm_a[n] for n in names], [lm_b[n] for n in names], mcfg)
    save_image(out, args.out)
    return EXIT_OK


def load_render_job(path, cfg: PipelineConfig):
    """Scene plus camera; the scene's ``camera`` block gives size, config may set intrinsics."""
    data = _read_json(_require(path))
    scene = scene_from_dict(data, Path(path).parent)
    cam = data.get("camera") if isinstance(data, dict) else None
    if not isinstance(cam, dict) or "width" not in cam or "height" not in cam:
        raise SceneFormatError(f"{path}: camera: needs 'width' and 'height'")
    try:
        width, height = int(cam["width"]), int(cam["height"])
        focal = cfg.camera.focal_px if cfg.camera.focal_px is not None else float(cam["focal_px"])
    except (KeyError, TypeError, ValueError):
        raise SceneFormatError(f"{path}: camera: needs numeric 'focal_px', 'width', 'height'") from None
    pp = cfg.camera.principal_point or cam.get("principal_point")
    camera = PinholeCamera(focal, tuple(pp), (width, height)) if pp else PinholeCamera.centered(focal, width, height)
    return scene, camera


def cmd_render(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    scene, camera = load_render_job(args.scene, cfg)
    save_image(render(scene, camera, workers=cfg.workers), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glintcheck", description="Detect face morphs from inconsistent skin highlights.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", required=True, help="output path")
        p.add_argument("--workers", type=int, help="parallel workers")
        p.add_argument("--focal-px", dest="focal_px", type=float, help="camera focal length in pixels")

    p = sub.add_parser("estimate-lights", help="light directions from eye catch-lights")
    common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--eyes", required=True, help="eye annotation JSON")
    p.set_defaults(func=cmd_estimate_lights)

    p = sub.add_parser("verify", help="compare synthetic and detected nose highlights")
    common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--eyes", required=True, help="eye annotation JSON")
    p.add_argument("--mesh", required=True, help="OBJ face mesh")
    p.add_argument("--tags", help="landmark tag JSON (name -> vertex index)")
    p.add_argument("--landmarks", required=True, help="image landmark JSON (name -> [u, v])")
    p.add_argument("--overlay", help="overlay image path")
    p.add_argument("--accept", type=float, help="IoU needed for a consistent decision")
    p.add_argument("--binarize", type=float, help="relative threshold for the synthetic mask")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("morph", help="landmark-based face morph")
    common(p)
    p.add_argument("--image-a", dest="image_a", required=True)
    p.add_argument("--image-b", dest="image_b", required=True)
    p.add_argument("--landmarks-a", dest="landmarks_a", required=True)
    p.add_argument("--landmarks-b", dest="landmarks_b", required=True)
    p.add_argument("--alpha", type=float, help="weight of image A")
    p.set_defaults(func=cmd_morph)

    p = sub.add_parser("render", help="ray-trace a scene file")
    common(p)
    p.add_argument("--scene", required=True)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageFailure as exc:
        print(f"error [{exc.stage}]: {exc.cause}", file=sys.stderr)
        return EXIT_ERROR
    except GlintError as exc:
        stage = getattr(exc, "stage", None)
        prefix = f"error [{stage}]" if isinstance(stage, str) else "error"
        print(f"{prefix}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
