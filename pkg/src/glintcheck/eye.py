"""Eye-model fitting and light-direction recovery from corneal catch-lights.

The eyeball is a mirrored sphere.  In model coordinates its centre is the
origin and the optical axis points along -z; the limbus is a circle of radius
``limbus_radius`` in the plane ``z = -limbus_center_offset`` and the pupil is
a concentric circle in the same plane, pushed ``pupil_center_offset`` further
along the axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BackFacing, DegenerateAnnotation, Divergence, EmptyEstimate, RayMissesSphere
from .geometry import (
    Correspondence,
    PinholeCamera,
    RigidTransform,
    angle_between,
    backproject,
    normalize,
    pixel_ray,
    project_points,
    rotation_between,
    solve_rigid_update,
    view_direction,
)

MODEL_AXIS = np.array([0.0, 0.0, -1.0])
CIRCLE_SAMPLES = 360
# relative rise in mean distance still treated as convergence rather than growth
GROWTH_TOL = 1e-3


@dataclass(frozen=True)
class EyeGeometry:
    vitreous_radius: float = 7.8
    limbus_radius: float = 5.8
    limbus_center_offset: float = 5.25
    pupil_center_offset: float = 0.0

    def __post_init__(self):
        if not 0 < self.limbus_radius < self.vitreous_radius:
            raise ValueError("need 0 < limbus_radius < vitreous_radius")
        if not 0 <= self.limbus_center_offset < self.vitreous_radius:
            raise ValueError("need 0 <= limbus_center_offset < vitreous_radius")


@dataclass(frozen=True)
class EyeAnnotation:
    limbus_points: np.ndarray
    pupil_points: np.ndarray
    highlight_pixels: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        lp = np.asarray(self.limbus_points, dtype=float).reshape(-1, 2)
        pp = np.asarray(self.pupil_points, dtype=float).reshape(-1, 2)
        hp = np.asarray(self.highlight_pixels, dtype=float).reshape(-1, 2)
        if len(lp) < 5 or len(pp) < 5:
            raise DegenerateAnnotation("limbus and pupil each need at least 5 marked points")
        for a in (lp, pp, hp):
            a.setflags(write=False)
        object.__setattr__(self, "limbus_points", lp)
        object.__setattr__(self, "pupil_points", pp)
        object.__setattr__(self, "highlight_pixels", hp)

    def check_bounds(self, camera: PinholeCamera) -> None:
        pts = np.vstack([self.limbus_points, self.pupil_points, self.highlight_pixels])
        w, h = camera.image_size
        # pixel centres sit at integer coordinates, so the image spans [-0.5, size - 0.5]
        if np.any(pts < -0.5) or np.any(pts[:, 0] > w - 0.5) or np.any(pts[:, 1] > h - 0.5):
            raise DegenerateAnnotation("annotation points fall outside the image")

    def limbus_circle(self) -> tuple[np.ndarray, float]:
        """Centroid and mean radius (pixels) of the marked limbus."""
        c = self.limbus_points.mean(axis=0)
        return c, float(np.linalg.norm(self.limbus_points - c, axis=1).mean())


@dataclass(frozen=True)
class EyePose:
    center: np.ndarray
    gaze: np.ndarray
    pupil_radius: float
    # roll about the gaze axis is unobservable from circles; kept for the tracker
    rotation: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        c = np.array(self.center, dtype=float)
        g = np.array(self.gaze, dtype=float)
        if not c[2] > 0:
            raise ValueError("eye centre must lie in front of the camera")
        if abs(np.linalg.norm(g) - 1.0) > 1e-9:
            raise ValueError("gaze must be a unit vector")
        r = rotation_between(MODEL_AXIS, g) if self.rotation is None else np.array(self.rotation, dtype=float)
        for a in (c, g, r):
            a.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "gaze", g)
        object.__setattr__(self, "rotation", r)

    @property
    def transform(self) -> RigidTransform:
        return RigidTransform(self.rotation, self.center)

    @classmethod
    def from_transform(cls, t: RigidTransform, pupil_radius: float) -> "EyePose":
        return cls(t.translation, normalize(t.rotation @ MODEL_AXIS), pupil_radius, t.rotation)


@dataclass(frozen=True)
class LightEstimate:
    directions: np.ndarray
    per_eye_residuals: list[float]

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=float).reshape(-1, 3)
        if len(d) and np.abs(np.linalg.norm(d, axis=1) - 1.0).max() > 1e-9:
            raise ValueError("light directions must be unit vectors")
        d.setflags(write=False)
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "per_eye_residuals", [float(r) for r in self.per_eye_residuals])


def circle_points(radius: float, plane_offset: float, theta: np.ndarray) -> np.ndarray:
    """Model-space points of an axis-aligned circle in the plane z = -plane_offset."""
    theta = np.asarray(theta, dtype=float)
    return np.stack([radius * np.cos(theta), radius * np.sin(theta), np.full_like(theta, -plane_offset)], axis=-1)


def _pupil_offset(geom: EyeGeometry) -> float:
    return geom.limbus_center_offset + geom.pupil_center_offset


def model_circles(pose: EyePose, geom: EyeGeometry, n: int = CIRCLE_SAMPLES) -> tuple[np.ndarray, np.ndarray]:
    """Limbus and pupil circles in camera coordinates, ``n`` samples each."""
    theta = np.arange(n) * (2 * np.pi / n)
    t = pose.transform
    limbus = t.apply(circle_points(geom.limbus_radius, geom.limbus_center_offset, theta))
    pupil = t.apply(circle_points(pose.pupil_radius, _pupil_offset(geom), theta))
    return limbus, pupil


def annotate_from_pose(
    pose: EyePose,
    camera: PinholeCamera,
    geom: EyeGeometry = EyeGeometry(),
    n_points: int = 24,
    highlights=(),
    noise_px: float = 0.0,
    rng: np.random.Generator | None = None,
) -> EyeAnnotation:
    """Synthesise limbus/pupil annotations by projecting a known eye pose."""
    theta = (np.arange(n_points) + 0.5) * (2 * np.pi / n_points)
    t = pose.transform
    limbus = project_points(camera, t.apply(circle_points(geom.limbus_radius, geom.limbus_center_offset, theta)))
    pupil = project_points(camera, t.apply(circle_points(pose.pupil_radius, _pupil_offset(geom), theta)))
    if noise_px:
        rng = rng or np.random.default_rng()
        limbus = limbus + rng.normal(0.0, noise_px, limbus.shape)
        pupil = pupil + rng.normal(0.0, noise_px, pupil.shape)
    return EyeAnnotation(limbus, pupil, np.asarray(highlights, dtype=float).reshape(-1, 2))


def init_eye_pose(ann: EyeAnnotation, camera: PinholeCamera, geom: EyeGeometry = EyeGeometry()) -> EyePose:
    """Initial eye placement from the limbus size, looking at the camera."""
    ann.check_bounds(camera)
    centroid, r_l = ann.limbus_circle()
    spread = np.linalg.svd(ann.limbus_points - centroid, compute_uv=False)
    if r_l < 2.0 or spread[1] < 1e-6 * max(spread[0], 1e-300):
        raise DegenerateAnnotation(f"limbus annotation is degenerate (mean radius {r_l:.3g} px)")
    d = geom.limbus_radius * camera.focal_px / r_l - geom.limbus_center_offset
    if d <= 0:
        raise DegenerateAnnotation(f"limbus radius {r_l:.3g} px implies a non-positive depth")
    center = backproject(camera, centroid, d)
    gaze = view_direction(camera, center)
    pupil_px = float(np.linalg.norm(ann.pupil_points - centroid, axis=1).mean())
    return EyePose(center, gaze, pupil_px * d / camera.focal_px)


def _closest_on_circle(camera, transform, radius, offset, targets):
    """Closest projected circle point to each target pixel.

    Coarse search over 1-degree samples, then a vectorised golden-section
    refinement within the bracketing samples.  Returns angles and distances.
    """
    step = 2 * np.pi / CIRCLE_SAMPLES
    theta = np.arange(CIRCLE_SAMPLES) * step
    proj = project_points(camera, transform.apply(circle_points(radius, offset, theta)))
    d2 = ((targets[:, None, :] - proj[None, :, :]) ** 2).sum(-1)
    best = theta[np.argmin(d2, axis=1)]

    def dist(th):
        p = project_points(camera, transform.apply(circle_points(radius, offset, th)))
        return np.linalg.norm(p - targets, axis=1)

    lo, hi = best - step, best + step
    g = (math.sqrt(5) - 1) / 2
    a = hi - g * (hi - lo)
    b = lo + g * (hi - lo)
    fa, fb = dist(a), dist(b)
    for _ in range(60):
        left = fa < fb
        hi = np.where(left, b, hi)
        lo = np.where(left, lo, a)
        b_new = np.where(left, a, lo + g * (hi - lo))
        a_new = np.where(left, hi - g * (hi - lo), b)
        a, b = a_new, b_new
        fa, fb = dist(a), dist(b)
    th = 0.5 * (lo + hi)
    return th, dist(th)


def _pupil_radius_mm(ann: EyeAnnotation, pose: EyePose, camera: PinholeCamera, geom: EyeGeometry) -> float:
    """Mean distance of the marked pupil border to the limbus centre, in mm.

    Each marked pixel is lifted onto the pupil plane of the current pose; the
    distance is measured there.  Rays nearly parallel to the plane fall back
    to the pixel distance scaled by the plane depth.
    """
    center = pose.center + pose.gaze * _pupil_offset(geom)
    rays = np.array([pixel_ray(camera, p) for p in ann.pupil_points])
    denom = rays @ pose.gaze
    if np.all(np.abs(denom) > 1e-6):
        t = (center @ pose.gaze) / denom
        if np.all(t > 0):
            pts = rays * t[:, None]
            return float(np.linalg.norm(pts - center, axis=1).mean())
    proj = project_points(camera, center[None])[0]
    return float(np.linalg.norm(ann.pupil_points - proj, axis=1).mean() * center[2] / camera.focal_px)


def _mean_distance(ann, pose, camera, geom):
    t = pose.transform
    _, dl = _closest_on_circle(camera, t, geom.limbus_radius, geom.limbus_center_offset, ann.limbus_points)
    _, dp = _closest_on_circle(camera, t, pose.pupil_radius, _pupil_offset(geom), ann.pupil_points)
    # root-mean-square, the quantity the rigid step actually minimises
    return float(np.sqrt(np.mean(np.concatenate([dl, dp]) ** 2)))


def fit_eye_pose(
    init: EyePose,
    ann: EyeAnnotation,
    camera: PinholeCamera,
    geom: EyeGeometry = EyeGeometry(),
    max_iter: int = 100,
    rel_tol: float = 1e-6,
) -> EyePose:
    """Refine an eye pose against the marked limbus and pupil borders.

    Each round re-estimates the pupil size, pairs every marked pixel with the
    closest point of the projected model circles and takes one rigid-tracker
    step.  Returns the best pose seen, so the mean distance never exceeds
    that of ``init``.
    """
    pose = init
    best = pose
    best_dist = _mean_distance(ann, pose, camera, geom)
    worse_streak = 0
    for _ in range(max_iter):
        if best_dist < 1e-9:
            break
        # step 1: pupil size
        pose = EyePose(pose.center, pose.gaze, _pupil_radius_mm(ann, pose, camera, geom), pose.rotation)
        # step 2: closest-point correspondences
        t = pose.transform
        th_l, _ = _closest_on_circle(camera, t, geom.limbus_radius, geom.limbus_center_offset, ann.limbus_points)
        th_p, _ = _closest_on_circle(camera, t, pose.pupil_radius, _pupil_offset(geom), ann.pupil_points)
        model = np.vstack(
            [
                circle_points(geom.limbus_radius, geom.limbus_center_offset, th_l),
                circle_points(pose.pupil_radius, _pupil_offset(geom), th_p),
            ]
        )
        pixels = np.vstack([ann.limbus_points, ann.pupil_points])
        corr = [Correspondence(m, p) for m, p in zip(model, pixels)]
        # step 3: rigid update
        new_t = solve_rigid_update(corr, t, camera)
        pose = EyePose.from_transform(new_t, pose.pupil_radius)
        dist = _mean_distance(ann, pose, camera, geom)
        if dist < best_dist:
            improvement = (best_dist - dist) / best_dist
            best, best_dist = pose, dist
            worse_streak = 0
            if improvement < rel_tol:
                break
        else:
            # a marginal rise means the noise floor was reached
            if dist <= best_dist * (1.0 + GROWTH_TOL) or new_t is t:
                break
            worse_streak += 1
            if worse_streak >= 10:
                raise Divergence("eye fit distance grew on 10 consecutive steps")
    return best


def _sphere_hit(camera: PinholeCamera, pixel, center, radius) -> np.ndarray:
    d = pixel_ray(camera, pixel)
    b = float(d @ center)
    disc = b * b - float(center @ center) + radius * radius
    if disc < 0:
        raise RayMissesSphere(f"ray through pixel {tuple(pixel)} misses the eye sphere")
    return d * (b - math.sqrt(disc))


def estimate_light_direction(
    pose: EyePose, highlight_pixel, camera: PinholeCamera, geom: EyeGeometry = EyeGeometry()
) -> np.ndarray:
    """Mirror the view direction about the sphere normal at the catch-light."""
    p = _sphere_hit(camera, highlight_pixel, pose.center, geom.vitreous_radius)
    n = normalize(p - pose.center)
    v = view_direction(camera, p)
    if float(v @ n) <= 0:
        raise BackFacing("catch-light lies on the far side of the eye sphere")
    return mirror_directions(n, v)


def mirror_directions(normals, views) -> np.ndarray:
    """Reflect unit view directions about unit normals, row-wise: L = 2 (V.N) N - V."""
    n = np.asarray(normals, dtype=float)
    v = np.asarray(views, dtype=float)
    vn = np.sum(v * n, axis=-1, keepdims=True)
    out = 2.0 * vn * n - v
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def merge_light_estimates(left, right, max_pair_angle_deg: float | None = None) -> LightEstimate:
    """Pair per-eye light directions and average each pair.

    Pairs are formed greedily by ascending angular gap.  Directions left
    without a partner (count mismatch, or gap above ``max_pair_angle_deg``
    when a cap is given) are passed through alone with a residual of -1.
    """
    left = [normalize(d) for d in left]
    right = [normalize(d) for d in right]
    if not left and not right:
        raise EmptyEstimate("no light directions from either eye")
    candidates = sorted(
        (angle_between(l, r), i, j) for i, l in enumerate(left) for j, r in enumerate(right)
    )
    partner: dict[int, tuple[int, float]] = {}
    used_right: set[int] = set()
    for ang, i, j in candidates:
        if i in partner or j in used_right:
            continue
        if max_pair_angle_deg is not None and math.degrees(ang) > max_pair_angle_deg:
            continue
        partner[i] = (j, ang)
        used_right.add(j)
    directions, residuals = [], []
    for i, l in enumerate(left):
        if i in partner:
            j, ang = partner[i]
            directions.append(normalize(l + right[j]))
            residuals.append(math.degrees(ang))
        else:
            directions.append(l)
            residuals.append(-1.0)
    for j, r in enumerate(right):
        if j not in used_right:
            directions.append(r)
            residuals.append(-1.0)
    return LightEstimate(np.array(directions), residuals)
