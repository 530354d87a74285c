import json
import math
from pathlib import Path

import numpy as np
import pytest

from glintcheck.cli import load_annotations, main, save_annotations
from glintcheck.eye import EyePose, annotate_from_pose
from glintcheck.geometry import PinholeCamera, angle_between, normalize, view_direction
from glintcheck.imageio import RasterImage, load_image, save_image
from glintcheck.meshio import load_landmarks, save_landmarks
from glintcheck.morph import average_landmarks
from glintcheck.oracle import DirectionalLight, Mirror, Scene, SphereObject, render

DATA = Path(__file__).parent / "data"


def d(name):
    return str(DATA / name)


def verify_args(image, out, landmarks="demo_landmarks.json", extra=()):
    return [
        "verify",
        "--config", d("config.json"),
        "--image", str(image),
        "--eyes", d("demo_eyes.json"),
        "--mesh", d("demo.obj"),
        "--tags", d("demo_tags.json"),
        "--landmarks", landmarks if Path(landmarks).is_absolute() else d(landmarks),
        "--out", str(out),
        *extra,
    ]


def eye_pair_job(tmp_path, lights, radius_deg=4.0):
    """Two mirrored eyes 60 mm apart at 500 mm, rendered and annotated."""
    cam = PinholeCamera.centered(2000.0, 640, 480)
    centers = {"left": np.array([-30.0, 0.0, 500.0]), "right": np.array([30.0, 0.0, 500.0])}
    scene = Scene(
        spheres=tuple(SphereObject(tuple(c), 7.8, Mirror()) for c in centers.values()),
        lights=tuple(DirectionalLight(tuple(normalize(l)), (1.0, 1.0, 1.0), radius_deg) for l in lights),
    )
    img = tmp_path / "eyes.ppm"
    save_image(render(scene, cam, workers=4), img)
    ann = {s: annotate_from_pose(EyePose(c, view_direction(cam, c), 2.0), cam) for s, c in centers.items()}
    save_annotations(ann, tmp_path / "eyes.json")
    return img, tmp_path / "eyes.json"


def run_estimate(tmp_path, img, eyes):
    out = tmp_path / "lights.json"
    code = main(["estimate-lights", "--image", str(img), "--eyes", str(eyes), "--focal-px", "2000", "--out", str(out)])
    return code, (json.loads(out.read_text()) if out.exists() else None)


def test_estimate_lights_round_trip(tmp_path):
    truth = normalize([math.sin(math.radians(20)), 0.0, -math.cos(math.radians(20))])
    code, report = run_estimate(tmp_path, *eye_pair_job(tmp_path, [truth]))
    assert code == 0
    assert len(report["directions"]) == 1
    assert math.degrees(angle_between(report["directions"][0], truth)) < 2.0
    assert report["eye_pair_max_deg"] == 20.0


def test_estimate_lights_two_lights(tmp_path):
    truths = [normalize([0.3, -0.1, -1.0]), normalize([-0.25, 0.2, -1.0])]
    code, report = run_estimate(tmp_path, *eye_pair_job(tmp_path, truths))
    assert code == 0
    dirs = report["directions"]
    assert len(dirs) == 2
    for t in truths:
        assert min(math.degrees(angle_between(t, x)) for x in dirs) < 2.0


def test_annotation_round_trip(tmp_path):
    ann = load_annotations(d("demo_eyes.json"))
    save_annotations(ann, tmp_path / "a.json")
    assert (tmp_path / "a.json").read_text() == (DATA / "demo_eyes.json").read_text()


def test_missing_file_names_path(tmp_path, capsys):
    missing = tmp_path / "nowhere.json"
    code = main(["estimate-lights", "--image", d("demo.ppm"), "--eyes", str(missing), "--focal-px", "3000", "--out", str(tmp_path / "o.json")])
    assert code == 2
    assert str(missing) in capsys.readouterr().err


def test_bad_annotation_names_eye(tmp_path, capsys):
    ann = json.loads((DATA / "demo_eyes.json").read_text())
    ann["left"]["limbus"] = [[100.0, 100.0]] * 24
    (tmp_path / "eyes.json").write_text(json.dumps(ann))
    code = main(["estimate-lights", "--image", d("demo.ppm"), "--eyes", str(tmp_path / "eyes.json"), "--focal-px", "3000", "--out", str(tmp_path / "o.json")])
    assert code == 2
    assert "left" in capsys.readouterr().err


def test_missing_focal_length_is_an_error(tmp_path, capsys):
    code = main(["estimate-lights", "--image", d("demo.ppm"), "--eyes", d("demo_eyes.json"), "--out", str(tmp_path / "o.json")])
    assert code == 2 and "focal_px" in capsys.readouterr().err


def test_render_empty_scene_black(tmp_path):
    (tmp_path / "s.json").write_text(json.dumps({"camera": {"width": 8, "height": 5, "focal_px": 100}}))
    assert main(["render", "--scene", str(tmp_path / "s.json"), "--out", str(tmp_path / "o.ppm")]) == 0
    img = load_image(tmp_path / "o.ppm")
    assert (img.width, img.height) == (8, 5) and not img.pixels.any()


def test_render_malformed_scene(tmp_path, capsys):
    (tmp_path / "s.json").write_text('{"camera": {"width": 8, "height": 5, "focal_px": 100},\n "lights": [}\n')
    code = main(["render", "--scene", str(tmp_path / "s.json"), "--out", str(tmp_path / "o.ppm")])
    assert code == 2
    err = capsys.readouterr().err
    assert "line 2" in err and "column" in err
    (tmp_path / "t.json").write_text(json.dumps({"camera": {"width": 8, "height": 5, "focal_px": 100}, "spheres": [{"radius": 1}]}))
    assert main(["render", "--scene", str(tmp_path / "t.json"), "--out", str(tmp_path / "o.ppm")]) == 2
    assert "spheres[0]" in capsys.readouterr().err


def test_render_golden_bit_identical(tmp_path):
    golden = (DATA / "demo.ppm").read_bytes()
    for workers in ("1", "3"):
        out = tmp_path / f"r{workers}.ppm"
        assert main(["render", "--scene", d("demo_scene.json"), "--out", str(out), "--workers", workers]) == 0
        assert out.read_bytes() == golden


def test_verify_genuine_golden(tmp_path):
    golden = (DATA / "demo_verify.json").read_bytes()
    for workers in ("1", "4"):
        out = tmp_path / f"v{workers}.json"
        overlay = tmp_path / f"o{workers}.ppm"
        assert main(verify_args(d("demo.ppm"), out, extra=("--workers", workers, "--overlay", str(overlay)))) == 0
        assert out.read_bytes() == golden
        assert overlay.read_bytes() == (DATA / "demo_overlay.ppm").read_bytes()
    report = json.loads(golden)
    assert report["decision"] == "consistent" and report["decision_score"] > 0.8
    # every threshold that shaped the result is echoed
    assert {"accept_threshold", "thresholds", "skin"} <= set(report)


def test_verify_accept_override(tmp_path):
    out = tmp_path / "v.json"
    assert main(verify_args(d("demo.ppm"), out, extra=("--accept", "0.999"))) == 0
    report = json.loads(out.read_text())
    assert report["accept_threshold"] == 0.999 and report["decision"] == "inconsistent"


def test_verify_all_dark_is_inconclusive(tmp_path, capsys):
    dark = tmp_path / "dark.ppm"
    save_image(RasterImage.blank(480, 440), dark)
    out = tmp_path / "v.json"
    assert main(verify_args(dark, out)) == 3
    assert json.loads(out.read_text())["decision"] == "inconclusive"
    assert "inconclusive" in capsys.readouterr().err


def test_verify_stage_failure_exit_code(tmp_path, capsys):
    lm = tmp_path / "few.json"
    save_landmarks(dict(list(load_landmarks(d("demo_landmarks.json")).items())[:2]), lm)
    assert main(verify_args(d("demo.ppm"), tmp_path / "v.json", landmarks=str(lm))) == 2
    assert "error [" in capsys.readouterr().err


def morph_args(out, a="demo", b="other", extra=()):
    return [
        "morph",
        "--image-a", d(f"{a}.ppm"),
        "--image-b", d(f"{b}.ppm"),
        "--landmarks-a", d(f"{a}_landmarks.json"),
        "--landmarks-b", d(f"{b}_landmarks.json"),
        "--out", str(out),
        *extra,
    ]


def test_morph_identity(tmp_path):
    out = tmp_path / "m.ppm"
    assert main(morph_args(out, b="demo")) == 0
    assert out.read_bytes() == (DATA / "demo.ppm").read_bytes()


def test_morph_alpha_one_keeps_image_a_colours(tmp_path):
    out = tmp_path / "m.ppm"
    assert main(morph_args(out, extra=("--alpha", "1"))) == 0
    img = load_image(out).pixels
    # identities differ only around the nose: far from it the morph is image A
    np.testing.assert_array_equal(img[:60], load_image(d("demo.ppm")).pixels[:60])
    assert main(morph_args(tmp_path / "x.ppm", extra=("--alpha", "1.5"))) == 2


def test_morph_landmark_names_must_match(tmp_path, capsys):
    lm = load_landmarks(d("other_landmarks.json"))
    lm.pop("chin")
    save_landmarks(lm, tmp_path / "lm.json")
    args = morph_args(tmp_path / "m.ppm")
    args[args.index("--landmarks-b") + 1] = str(tmp_path / "lm.json")
    assert main(args) == 2
    assert "chin" in capsys.readouterr().err


def test_morph_consumed_by_verify(tmp_path):
    morph = tmp_path / "morph.ppm"
    assert main(morph_args(morph)) == 0
    a, b = load_landmarks(d("demo_landmarks.json")), load_landmarks(d("other_landmarks.json"))
    names = sorted(a)
    avg = average_landmarks([a[n] for n in names], [b[n] for n in names])
    save_landmarks({n: tuple(p) for n, p in zip(names, avg)}, tmp_path / "avg.json")
    out = tmp_path / "v.json"
    code = main(verify_args(morph, out, landmarks=str(tmp_path / "avg.json")))
    assert code in (0, 3)
    genuine = json.loads((DATA / "demo_verify.json").read_text())["decision_score"]
    score = json.loads(out.read_text()).get("decision_score") or 0.0
    assert score < genuine


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"camera": {"focal_px": 3000.0}, "thresholds": {"accept": 0.99}}))
    out = tmp_path / "v.json"
    args = verify_args(d("demo.ppm"), out)
    args[args.index("--config") + 1] = str(cfg)
    assert main(args) == 0
    assert json.loads(out.read_text())["accept_threshold"] == 0.99
    assert main(args + ["--accept", "0.5"]) == 0
    assert json.loads(out.read_text())["accept_threshold"] == 0.5
    cfg.write_text(json.dumps({"thresholds": {"nonsense": 1}}))
    assert main(args) == 2


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["render"])
    assert exc.value.code == 2
