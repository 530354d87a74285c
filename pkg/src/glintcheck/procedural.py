"""Procedural meshes and ground-truth scenes for synthetic experiments.

Face coordinates: millimetres, x to the subject's image-left-to-right, y
downward, z away from the camera.  The nose protrudes toward -z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .eye import EyeAnnotation, EyeGeometry, EyePose, annotate_from_pose
from .geometry import (
    PinholeCamera,
    RigidTransform,
    TriangleMesh,
    compute_vertex_normals,
    normalize,
    normalize_rows,
    project_points,
    rotvec_to_matrix,
    view_direction,
)
from .oracle import DirectionalLight, MeshObject, Mirror, Scene, Skin, SphereObject, render_radiance


def icosphere(radius: float = 1.0, subdivisions: int = 3, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Geodesic sphere with 20 * 4**subdivisions outward-wound triangles."""
    t = (1.0 + 5**0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [tuple(normalize(v)) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                cache[key] = len(verts)
                verts.append(tuple(normalize(np.add(verts[i], verts[j]))))
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    unit = np.array(verts)
    tris = np.array(faces, dtype=np.int64)
    # orient every face outward
    a, b, c = unit[tris[:, 0]], unit[tris[:, 1]], unit[tris[:, 2]]
    flip = np.einsum("ij,ij->i", np.cross(b - a, c - a), a + b + c) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return TriangleMesh(unit * radius + np.asarray(center, dtype=float), unit, tris)


@dataclass(frozen=True)
class NoseParams:
    tip_height: float = 20.0  # protrusion of the tip in front of the face surface
    tip_y: float = 18.0
    bridge_height: float = 5.0
    bridge_width: float = 5.0  # gaussian sigma across the bridge
    tip_width: float = 8.0
    lateral_offset: float = 0.0
    hump: float = 0.0  # extra height mid-dorsum
    alar_height: float = 5.0
    alar_spread: float = 11.0

    @classmethod
    def random(cls, rng: np.random.Generator) -> "NoseParams":
        return cls(
            tip_height=rng.uniform(15.0, 25.0),
            tip_y=rng.uniform(13.0, 22.0),
            bridge_height=rng.uniform(3.0, 8.0),
            bridge_width=rng.uniform(3.5, 7.5),
            tip_width=rng.uniform(6.0, 12.0),
            lateral_offset=rng.uniform(-2.5, 2.5),
            hump=rng.uniform(-2.0, 4.0),
            alar_height=rng.uniform(3.0, 7.0),
            alar_spread=rng.uniform(9.0, 14.0),
        )


X_RANGE = (-32.0, 32.0)
Y_RANGE = (-16.0, 36.0)
GRID_STEP = 1.0
EYE_OFFSET = np.array([30.0, -26.0, 6.0])

LANDMARK_SITES = {
    "brow_left": (-26.0, -15.0),
    "brow_right": (26.0, -15.0),
    "cheek_left": (-28.0, 28.0),
    "cheek_right": (28.0, 28.0),
    "chin": (0.0, 35.0),
}


def _face_depth(x, y, p: NoseParams):
    base = 0.012 * x**2 + 0.004 * (y - 5.0) ** 2
    y0 = Y_RANGE[0]
    s = np.clip((y - y0) / (p.tip_y - y0), 0.0, 1.0)
    profile = p.bridge_height + (p.tip_height - p.bridge_height) * s**1.5 + p.hump * np.sin(np.pi * s) ** 2
    # sharp fall-off under the tip toward the upper lip
    below = np.clip((y - p.tip_y) / 6.0, 0.0, None)
    profile = profile * np.exp(-(below**2) * 1.5)
    width = p.bridge_width + (p.tip_width - p.bridge_width) * s
    nose = profile * np.exp(-0.5 * ((x - p.lateral_offset) / width) ** 2)
    alar = sum(
        p.alar_height * np.exp(-0.5 * (((x - p.lateral_offset - sgn * p.alar_spread) / 4.0) ** 2 + ((y - p.tip_y - 1.0) / 4.0) ** 2))
        for sgn in (-1.0, 1.0)
    )
    return base - nose - alar


def face_mesh(p: NoseParams = NoseParams()) -> TriangleMesh:
    """Height-field face patch around the nose with tagged landmark vertices."""
    xs = np.arange(X_RANGE[0], X_RANGE[1] + 1e-9, GRID_STEP)
    ys = np.arange(Y_RANGE[0], Y_RANGE[1] + 1e-9, GRID_STEP)
    xx, yy = np.meshgrid(xs, ys)
    zz = _face_depth(xx, yy, p)
    verts = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])
    nx = len(xs)
    tris = []
    for j in range(len(ys) - 1):
        for i in range(nx - 1):
            a = j * nx + i
            b, c, d = a + 1, a + nx, a + nx + 1
            # winding chosen so normals point toward -z (the camera)
            tris.append((a, c, b))
            tris.append((b, c, d))
    tris = np.array(tris, dtype=np.int64)

    def vid(x, y):
        i = int(round((x - X_RANGE[0]) / GRID_STEP))
        j = int(round((y - Y_RANGE[0]) / GRID_STEP))
        return j * nx + i

    tags = {name: vid(x, y) for name, (x, y) in LANDMARK_SITES.items()}
    off = p.lateral_offset
    tags.update(
        {
            "nose_bridge": vid(off * 0.3, Y_RANGE[0] + 2.0),
            "nose_dorsum": vid(off * 0.7, 0.5 * (Y_RANGE[0] + p.tip_y)),
            "nose_tip": vid(off, p.tip_y),
            "nose_base": vid(off, p.tip_y + 7.0),
            "nose_left_alar": vid(off - p.alar_spread - 3.0, p.tip_y + 2.0),
            "nose_right_alar": vid(off + p.alar_spread + 3.0, p.tip_y + 2.0),
        }
    )
    return TriangleMesh(verts, compute_vertex_normals(verts, tris), tris, tags)


def blend_meshes(a: TriangleMesh, b: TriangleMesh, weight: float = 0.5) -> TriangleMesh:
    """Vertex-wise blend of two meshes sharing topology; tags come from ``a``."""
    if a.vertices.shape != b.vertices.shape or not np.array_equal(a.triangles, b.triangles):
        raise ValueError("meshes must share topology")
    verts = weight * a.vertices + (1.0 - weight) * b.vertices
    return TriangleMesh(verts, compute_vertex_normals(verts, a.triangles), a.triangles, a.landmark_tags)


@dataclass(frozen=True)
class FaceSceneConfig:
    focal_px: float = 3000.0
    width: int = 480
    height: int = 440
    depth: float = 550.0
    radiance: float = 20.0
    # When set, rescale radiance so the brightest skin pixel's blue channel hits this
    # value.  1.76 puts half the specular peak at the detector's 0.88 clip level.
    auto_exposure: float | None = 1.76
    light_angular_radius_deg: float = 8.0
    ambient: float = 0.02
    skin: Skin = Skin(diffuse_albedo=(0.03, 0.015, 0.0))  # blue carries specular only
    eye_tint: tuple[float, float, float] = (1.0, 0.8, 0.6)

    def camera(self) -> PinholeCamera:
        return PinholeCamera.centered(self.focal_px, self.width, self.height)


@dataclass
class FaceScene:
    """A rendered-ready face scene plus the ground truth that generated it."""

    scene: Scene
    camera: PinholeCamera
    mesh: TriangleMesh
    pose: RigidTransform
    eyes: dict[str, EyePose]
    lights: np.ndarray

    def landmarks(self, noise_px: float = 0.0, rng=None) -> dict[str, tuple[float, float]]:
        names = sorted(self.mesh.landmark_tags)
        pts = project_points(self.camera, self.pose.apply(self.mesh.vertices[[self.mesh.landmark_tags[n] for n in names]]))
        if noise_px:
            pts = pts + (rng or np.random.default_rng()).normal(0.0, noise_px, pts.shape)
        return {n: (float(u), float(v)) for n, (u, v) in zip(names, pts)}

    def eye_annotations(self, geom: EyeGeometry = EyeGeometry(), n_points: int = 24) -> dict[str, EyeAnnotation]:
        return {side: annotate_from_pose(pose, self.camera, geom, n_points) for side, pose in self.eyes.items()}


def face_scene(
    mesh: TriangleMesh,
    light_dirs,
    pose: RigidTransform | None = None,
    cfg: FaceSceneConfig = FaceSceneConfig(),
    geom: EyeGeometry = EyeGeometry(),
) -> FaceScene:
    """Face mesh with two mirror-sphere eyes lit by directional lights."""
    pose = pose or RigidTransform(np.eye(3), np.array([0.0, 0.0, cfg.depth]))
    cam = cfg.camera()
    lights = normalize_rows(np.atleast_2d(np.asarray(light_dirs, dtype=float)))
    radiance = cfg.radiance
    if cfg.auto_exposure is not None:
        probe = Scene(
            meshes=(MeshObject(mesh, pose, cfg.skin),),
            lights=tuple(DirectionalLight(tuple(l), (1.0,) * 3) for l in lights),
            ambient=(0.0,) * 3,
        )
        peak = float(render_radiance(probe, cam, workers=4)[..., 2].max())
        if peak > 0:
            radiance = cfg.auto_exposure / peak
    eyes = {}
    spheres = []
    for side, sgn in (("left", -1.0), ("right", 1.0)):
        c = pose.apply(EYE_OFFSET * np.array([sgn, 1.0, 1.0]))
        eyes[side] = EyePose(c, view_direction(cam, c), 2.0)
        spheres.append(SphereObject(tuple(c), geom.vitreous_radius, Mirror(cfg.eye_tint)))
    scene = Scene(
        spheres=tuple(spheres),
        meshes=(MeshObject(mesh, pose, cfg.skin),),
        lights=tuple(
            DirectionalLight(tuple(l), (radiance,) * 3, cfg.light_angular_radius_deg) for l in lights
        ),
        ambient=(cfg.ambient,) * 3,
    )
    return FaceScene(scene, cam, mesh, pose, eyes, lights)


def random_light(rng: np.random.Generator, min_deg: float = 15.0, max_deg: float = 35.0) -> np.ndarray:
    """Direction toward a light in front of and above the face."""
    off = np.radians(rng.uniform(min_deg, max_deg))
    az = rng.uniform(np.radians(200.0), np.radians(340.0))  # upper half of the image (v < 0)
    return normalize([np.sin(off) * np.cos(az), np.sin(off) * np.sin(az), -np.cos(off)])


def random_pose(rng: np.random.Generator, depth: float = 550.0, max_deg: float = 4.0, max_shift: float = 8.0) -> RigidTransform:
    rv = np.radians(rng.uniform(-max_deg, max_deg, 3))
    t = np.array([rng.uniform(-max_shift, max_shift), rng.uniform(-max_shift, max_shift), depth + rng.uniform(-20, 20)])
    return RigidTransform(rotvec_to_matrix(rv), t)
