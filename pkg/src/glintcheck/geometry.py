"""Camera, rigid-pose and mesh primitives plus the Gauss-Newton rigid tracker.

Conventions: camera centre at the origin, +z into the scene, u to the right,
v downward, all lengths in millimetres.  Pixel coordinates are continuous with
pixel (col, row) centred at (u, v) = (col, row).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateConfiguration,
    InsufficientCorrespondences,
    NonPositiveDepth,
    ZeroVector,
)

UNIT_TOL = 1e-9


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def normalize(v) -> np.ndarray:
    """Return ``v / |v|``; raises ZeroVector for a zero-length input."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0 or not np.isfinite(n):
        raise ZeroVector("cannot normalize a zero-length vector")
    return v / n


def normalize_rows(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(n == 0.0, 1.0, n)


def angle_between(a, b) -> float:
    """Angle in radians between two vectors, stable near 0 and pi."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.arctan2(np.linalg.norm(np.cross(a, b)), np.dot(a, b)))


def skew(w) -> np.ndarray:
    x, y, z = w
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotvec_to_matrix(w) -> np.ndarray:
    """Rodrigues' formula."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    if theta < 1e-14:
        return np.eye(3) + skew(w)
    k = skew(w / theta)
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def orthonormalize(r: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(r)
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] *= -1
        out = u @ vt
    return out


def rotation_between(a, b) -> np.ndarray:
    """Minimal rotation taking direction ``a`` onto direction ``b``."""
    a = normalize(a)
    b = normalize(b)
    axis = np.cross(a, b)
    s = np.linalg.norm(axis)
    c = float(np.dot(a, b))
    if s < 1e-15:
        if c > 0:
            return np.eye(3)
        # antiparallel: rotate pi about any axis orthogonal to a
        helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        return rotvec_to_matrix(np.pi * normalize(np.cross(a, helper)))
    return rotvec_to_matrix(axis / s * np.arctan2(s, c))


@dataclass(frozen=True)
class PinholeCamera:
    focal_px: float
    principal_point: tuple[float, float]
    image_size: tuple[int, int]  # (width, height)

    def __post_init__(self):
        if not self.focal_px > 0:
            raise ValueError(f"focal_px must be positive, got {self.focal_px}")
        w, h = self.image_size
        if int(w) < 1 or int(h) < 1:
            raise ValueError(f"image_size components must be >= 1, got {self.image_size}")
        object.__setattr__(self, "principal_point", (float(self.principal_point[0]), float(self.principal_point[1])))
        object.__setattr__(self, "image_size", (int(w), int(h)))

    @classmethod
    def centered(cls, focal_px: float, width: int, height: int) -> "PinholeCamera":
        """Camera whose principal point sits at the image centre."""
        return cls(focal_px, ((width - 1) / 2.0, (height - 1) / 2.0), (width, height))

    @property
    def width(self) -> int:
        return self.image_size[0]

    @property
    def height(self) -> int:
        return self.image_size[1]

    def pixel_rays(self) -> np.ndarray:
        """Unit ray directions through every pixel centre, shape (H, W, 3)."""
        cx, cy = self.principal_point
        u = np.arange(self.width, dtype=float)
        v = np.arange(self.height, dtype=float)
        uu, vv = np.meshgrid(u, v)
        d = np.stack([(uu - cx) / self.focal_px, (vv - cy) / self.focal_px, np.ones_like(uu)], axis=-1)
        return normalize_rows(d)


def project(camera: PinholeCamera, p) -> tuple[float, float]:
    x, y, z = (float(c) for c in p)
    if not z > 0:
        raise NonPositiveDepth(f"point depth {z} is not in front of the camera")
    cx, cy = camera.principal_point
    return camera.focal_px * x / z + cx, camera.focal_px * y / z + cy


def project_points(camera: PinholeCamera, pts: np.ndarray) -> np.ndarray:
    """Vectorised :func:`project` for an (N, 3) array; returns (N, 2)."""
    pts = np.asarray(pts, dtype=float)
    z = pts[:, 2]
    if np.any(z <= 0):
        raise NonPositiveDepth("one or more points lie behind the camera")
    cx, cy = camera.principal_point
    return np.column_stack([camera.focal_px * pts[:, 0] / z + cx, camera.focal_px * pts[:, 1] / z + cy])


def backproject(camera: PinholeCamera, pixel, depth: float) -> np.ndarray:
    if not depth > 0:
        raise NonPositiveDepth(f"depth {depth} must be positive")
    cx, cy = camera.principal_point
    u, v = pixel
    return np.array([(u - cx) / camera.focal_px * depth, (v - cy) / camera.focal_px * depth, float(depth)])


def pixel_ray(camera: PinholeCamera, pixel) -> np.ndarray:
    """Unit direction of the camera ray through ``pixel``."""
    return normalize(backproject(camera, pixel, 1.0))


def view_direction(camera: PinholeCamera, p) -> np.ndarray:
    """Unit vector from ``p`` toward the camera centre."""
    return -normalize(p)


@dataclass(frozen=True)
class RigidTransform:
    """Maps model coordinates into camera coordinates: ``x_cam = R x + t``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = _frozen(self.rotation)
        t = _frozen(self.translation)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        if np.abs(r.T @ r - np.eye(3)).max() > UNIT_TOL or abs(np.linalg.det(r) - 1.0) > UNIT_TOL:
            raise ValueError("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def from_rotvec(cls, rotvec, translation) -> "RigidTransform":
        return cls(rotvec_to_matrix(rotvec), np.asarray(translation, dtype=float))

    def apply(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ self.rotation.T + self.translation

    def apply_direction(self, d) -> np.ndarray:
        return np.asarray(d, dtype=float) @ self.rotation.T

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform(
            orthonormalize(self.rotation @ other.rotation),
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def rotation_angle_to(self, other: "RigidTransform") -> float:
        """Angle (rad) of the relative rotation between two poses."""
        rel = self.rotation.T @ other.rotation
        c = np.clip((np.trace(rel) - 1.0) / 2.0, -1.0, 1.0)
        # acos loses precision near zero; use the skew part there
        s = np.linalg.norm([rel[2, 1] - rel[1, 2], rel[0, 2] - rel[2, 0], rel[1, 0] - rel[0, 1]]) / 2.0
        return float(np.arctan2(s, c))


@dataclass(frozen=True)
class Correspondence:
    model_point: np.ndarray
    image_point: tuple[float, float]

    def __post_init__(self):
        mp = _frozen(self.model_point)
        ip = tuple(float(c) for c in self.image_point)
        if mp.shape != (3,) or len(ip) != 2:
            raise ValueError("model_point must be 3-D and image_point 2-D")
        if not (np.all(np.isfinite(mp)) and all(np.isfinite(ip))):
            raise ValueError("correspondence coordinates must be finite")
        object.__setattr__(self, "model_point", mp)
        object.__setattr__(self, "image_point", ip)


def compute_vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Area-weighted vertex normals; winding decides orientation."""
    vertices = np.asarray(vertices, dtype=float)
    tris = np.asarray(triangles, dtype=np.int64)
    a, b, c = vertices[tris[:, 0]], vertices[tris[:, 1]], vertices[tris[:, 2]]
    face = np.cross(b - a, c - a)  # length is twice the area
    acc = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(acc, tris[:, k], face)
    return normalize_rows(acc)


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray
    vertex_normals: np.ndarray
    triangles: np.ndarray
    landmark_tags: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        v = _frozen(self.vertices)
        n = _frozen(self.vertex_normals)
        t = _frozen(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("vertices must have shape (N, 3)")
        if n.shape != v.shape:
            raise ValueError("vertex_normals length must equal vertices length")
        if t.size and (t.ndim != 2 or t.shape[1] != 3):
            raise ValueError("triangles must have shape (M, 3)")
        t = t.reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        tags = dict(self.landmark_tags)
        for name, idx in tags.items():
            if not 0 <= int(idx) < len(v):
                raise ValueError(f"landmark tag {name!r} points at missing vertex {idx}")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "vertex_normals", n)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "landmark_tags", {k: int(i) for k, i in tags.items()})

    @classmethod
    def from_vertices(cls, vertices, triangles, landmark_tags=None) -> "TriangleMesh":
        """Build a mesh whose normals are recomputed by area weighting."""
        normals = compute_vertex_normals(vertices, triangles)
        return cls(vertices, normals, triangles, landmark_tags or {})


def _residuals(corr_model: np.ndarray, corr_image: np.ndarray, pose: RigidTransform, camera: PinholeCamera):
    pc = pose.apply(corr_model)
    if np.any(pc[:, 2] <= 0):
        return None, pc
    cx, cy = camera.principal_point
    f = camera.focal_px
    proj = np.column_stack([f * pc[:, 0] / pc[:, 2] + cx, f * pc[:, 1] / pc[:, 2] + cy])
    return proj - corr_image, pc


def reprojection_rms(correspondences: Sequence[Correspondence], pose: RigidTransform, camera: PinholeCamera) -> float:
    model = np.array([c.model_point for c in correspondences])
    image = np.array([c.image_point for c in correspondences])
    r, _ = _residuals(model, image, pose, camera)
    if r is None:
        return float("inf")
    return float(np.sqrt(np.mean(np.sum(r * r, axis=1))))


def _apply_increment(pose: RigidTransform, step: np.ndarray) -> RigidTransform:
    # left-multiplied small rotation about the camera-frame origin of the model
    dr = rotvec_to_matrix(step[:3])
    r = orthonormalize(dr @ pose.rotation)
    t = pose.translation + step[3:]
    return RigidTransform(r, t)


def solve_rigid_update(
    correspondences: Sequence[Correspondence],
    pose: RigidTransform,
    camera: PinholeCamera,
    max_halvings: int = 10,
) -> RigidTransform:
    """One damped Gauss-Newton step on the 6-DoF reprojection error.

    The rotation increment is applied on the left around the model origin as
    expressed in camera coordinates, so ``x_cam = exp(w) R x + t + dt``.  The
    step is halved up to ``max_halvings`` times until the summed squared error
    does not increase; if no trial qualifies the input pose is returned.
    """
    if len(correspondences) < 3:
        raise InsufficientCorrespondences(f"need at least 3 correspondences, got {len(correspondences)}")
    model = np.array([c.model_point for c in correspondences])
    image = np.array([c.image_point for c in correspondences])
    r, pc = _residuals(model, image, pose, camera)
    if r is None:
        raise DegenerateConfiguration("model points project behind the camera at the current pose")
    sse = float(np.sum(r * r))

    f = camera.focal_px
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    # d(u,v)/d(x_cam)
    du = np.stack([f / z, np.zeros_like(z), -f * x / z**2], axis=1)
    dv = np.stack([np.zeros_like(z), f / z, -f * y / z**2], axis=1)
    # d(x_cam)/dw = -[R x]_x, d(x_cam)/dt = I
    rx = pc - pose.translation
    j = np.zeros((2 * len(model), 6))
    for i, (a, b) in enumerate(zip(du, dv)):
        dw = -skew(rx[i])
        j[2 * i, :3] = a @ dw
        j[2 * i, 3:] = a
        j[2 * i + 1, :3] = b @ dw
        j[2 * i + 1, 3:] = b
    res = r.reshape(-1)

    scale = np.linalg.norm(j, axis=0)
    if np.any(scale == 0):
        raise DegenerateConfiguration("a pose parameter has no effect on the residuals")
    js = j / scale
    sv = np.linalg.svd(js, compute_uv=False)
    if sv[-1] < 1e-9 * sv[0]:
        raise DegenerateConfiguration("normal equations are rank-deficient (collinear or coincident points)")
    if sse == 0.0:
        return pose
    step = -np.linalg.lstsq(js, res, rcond=None)[0] / scale

    for k in range(max_halvings + 1):
        trial = _apply_increment(pose, step * 0.5**k)
        rt, _ = _residuals(model, image, trial, camera)
        if rt is not None and float(np.sum(rt * rt)) <= sse:
            return trial
    return pose


def fit_rigid(
    correspondences: Sequence[Correspondence],
    pose: RigidTransform,
    camera: PinholeCamera,
    max_iter: int = 100,
    rel_tol: float = 1e-6,
) -> tuple[RigidTransform, list[float]]:
    """Iterate :func:`solve_rigid_update` to convergence.

    Returns the final pose and the RMS history (initial value first).
    """
    history = [reprojection_rms(correspondences, pose, camera)]
    for _ in range(max_iter):
        new = solve_rigid_update(correspondences, pose, camera)
        rms = reprojection_rms(correspondences, new, camera)
        prev = history[-1]
        if rms > prev:
            break
        pose = new
        history.append(rms)
        if prev == 0.0 or (prev - rms) <= rel_tol * prev:
            break
    return pose, history
