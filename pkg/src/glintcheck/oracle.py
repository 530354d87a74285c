"""Reference ray tracer for synthetic ground-truth scenes.

This module deliberately does not import :mod:`glintcheck.brdf`: it carries
its own angle-based coding of the Torrance-Sparrow model so that the two can
be checked against each other.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NoVisibleHighlight, SceneFormatError
from .geometry import (
    PinholeCamera,
    RigidTransform,
    TriangleMesh,
    angle_between,
    normalize,
    project,
    rotvec_to_matrix,
)
from .imageio import RasterImage
from .meshio import load_obj

# -- independent reflectance coding ---------------------------------------


def oracle_fresnel(theta_i: float, n: float) -> float:
    """Unpolarised Fresnel reflectance written with incidence/refraction angles."""
    if theta_i < 1e-12:
        return ((n - 1.0) / (n + 1.0)) ** 2
    theta_t = math.asin(math.sin(theta_i) / n)
    rs = (math.sin(theta_i - theta_t) / math.sin(theta_i + theta_t)) ** 2
    rp = (math.tan(theta_i - theta_t) / math.tan(theta_i + theta_t)) ** 2
    return 0.5 * (rs + rp)


def oracle_torrance_sparrow(N, L, V, rho_s: float, m: float, n: float) -> float:
    """Scalar BRDF value; 0 when the surface is back-lit or back-viewed."""
    N, L, V = (np.asarray(x, dtype=float) for x in (N, L, V))
    cos_l = float(N @ L)
    cos_v = float(N @ V)
    if cos_l <= 0.0 or cos_v <= 0.0:
        return 0.0
    H = (L + V) / math.sqrt(float((L + V) @ (L + V)))
    alpha = angle_between(N, H)
    beta = angle_between(V, H)
    cos_a = math.cos(alpha)
    d = math.exp(-((math.tan(alpha) / m) ** 2)) / (m**2 * cos_a**4)
    nh = float(N @ H)
    vh = float(V @ H)
    g = min(1.0, 2.0 * nh * cos_v / vh, 2.0 * nh * cos_l / vh)
    return rho_s / math.pi * d * g / (cos_l * cos_v) * oracle_fresnel(beta, n)


def _dot3(a, b):
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def _ts_array(N, L, V, rho_s, m, n):
    """Array form of :func:`oracle_torrance_sparrow` for shading many pixels."""
    cos_l = _dot3(N, L)
    cos_v = _dot3(N, V)
    out = np.zeros(len(N))
    ok = (cos_l > 0) & (cos_v > 0)
    if not ok.any():
        return out
    Nn, Vv, cl, cv = N[ok], V[ok], cos_l[ok], cos_v[ok]
    H = Vv + L
    H /= np.sqrt(_dot3(H, H))[:, None]
    nh = _dot3(Nn, H)
    vh = _dot3(Vv, H)
    cnh = np.cross(Nn, H)
    cvh = np.cross(Vv, H)
    alpha = np.arctan2(np.sqrt(_dot3(cnh, cnh)), nh)
    beta = np.arctan2(np.sqrt(_dot3(cvh, cvh)), vh)
    with np.errstate(under="ignore"):
        d = np.exp(-((np.tan(alpha) / m) ** 2)) / (m**2 * np.cos(alpha) ** 4)
    g = np.minimum(1.0, np.minimum(2 * nh * cv / vh, 2 * nh * cl / vh))
    theta_t = np.arcsin(np.sin(beta) / n)
    small = beta < 1e-12
    bi = np.where(small, 1.0, beta)
    tt = np.where(small, 1.0, theta_t)
    rs = (np.sin(bi - tt) / np.sin(bi + tt)) ** 2
    rp = (np.tan(bi - tt) / np.tan(bi + tt)) ** 2
    f = np.where(small, ((n - 1) / (n + 1)) ** 2, 0.5 * (rs + rp))
    out[ok] = rho_s / np.pi * d * g / (cl * cv) * f
    return out


# -- scene description ------------------------------------------------------


@dataclass(frozen=True)
class Mirror:
    tint: tuple[float, float, float] = (0.1, 0.08, 0.06)


@dataclass(frozen=True)
class Skin:
    rho_s: float = 0.497
    m: float = 0.266
    refraction_index: float = 1.38
    diffuse_albedo: tuple[float, float, float] = (0.03, 0.018, 0.01)


@dataclass(frozen=True)
class SphereObject:
    center: tuple[float, float, float]
    radius: float
    material: Mirror | Skin

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")


@dataclass(frozen=True)
class MeshObject:
    mesh: TriangleMesh
    pose: RigidTransform
    material: Mirror | Skin


@dataclass(frozen=True)
class DirectionalLight:
    direction: tuple[float, float, float]  # unit vector from the scene toward the light
    radiance: tuple[float, float, float] = (1.0, 1.0, 1.0)
    angular_radius_deg: float = 0.5

    def __post_init__(self):
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-9:
            raise ValueError("light direction must be a unit vector")


@dataclass(frozen=True)
class Scene:
    spheres: tuple[SphereObject, ...] = ()
    meshes: tuple[MeshObject, ...] = ()
    lights: tuple[DirectionalLight, ...] = ()
    ambient: tuple[float, float, float] = (0.0, 0.0, 0.0)


# -- rendering ---------------------------------------------------------------


def _hit_spheres(scene, rays, t_best, obj_best, normals):
    for si, sph in enumerate(scene.spheres):
        c = np.asarray(sph.center, dtype=float)
        b = _dot3(rays, c)
        disc = b * b - float(c @ c) + sph.radius**2
        hit = disc >= 0
        t = np.where(hit, b - np.sqrt(np.where(hit, disc, 0.0)), np.inf)
        closer = hit & (t > 1e-9) & (t < t_best)
        t_best[closer] = t[closer]
        obj_best[closer] = si
        p = rays[closer] * t[closer][:, None]
        normals[closer] = (p - c) / sph.radius


def _hit_meshes(scene, camera, rays, row0, t_best, obj_best, normals):
    """Moller-Trumbore against each triangle, limited to its screen bounding box."""
    w = camera.width
    n_rows = rays.shape[0] // w
    for mi, obj in enumerate(scene.meshes, start=len(scene.spheres)):
        verts = obj.pose.apply(obj.mesh.vertices)
        vnorm = obj.pose.apply_direction(obj.mesh.vertex_normals)
        for tri in obj.mesh.triangles.tolist():
            v0, v1, v2 = verts[tri[0]], verts[tri[1]], verts[tri[2]]
            if min(v0[2], v1[2], v2[2]) > 0:
                us, vs = [], []
                for v in (v0, v1, v2):
                    u, vv = project(camera, v)
                    us.append(u)
                    vs.append(vv)
                c0 = max(int(math.floor(min(us))) - 1, 0)
                c1 = min(int(math.ceil(max(us))) + 1, w - 1)
                r0 = max(int(math.floor(min(vs))) - 1, row0)
                r1 = min(int(math.ceil(max(vs))) + 1, row0 + n_rows - 1)
                if c0 > c1 or r0 > r1:
                    continue
                idx = ((np.arange(r0, r1 + 1) - row0)[:, None] * w + np.arange(c0, c1 + 1)[None, :]).ravel()
            else:
                idx = np.arange(rays.shape[0])
            d = rays[idx]
            e1 = v1 - v0
            e2 = v2 - v0
            pvec = np.cross(d, e2)
            det = _dot3(pvec, e1)
            ok = np.abs(det) > 1e-14
            if not ok.any():
                continue
            inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
            tvec = -v0
            a = _dot3(pvec, tvec) * inv
            qvec = np.cross(tvec, e1)
            b = _dot3(d, qvec) * inv
            t = float(e2 @ qvec) * inv
            hit = ok & (a >= 0) & (b >= 0) & (a + b <= 1) & (t > 1e-9)
            sel = idx[hit]
            closer = t[hit] < t_best[sel]
            if not closer.any():
                continue
            sel = sel[closer]
            a, b, t = a[hit][closer], b[hit][closer], t[hit][closer]
            t_best[sel] = t
            obj_best[sel] = mi
            n = (1 - a - b)[:, None] * vnorm[tri[0]] + a[:, None] * vnorm[tri[1]] + b[:, None] * vnorm[tri[2]]
            normals[sel] = n / np.sqrt(_dot3(n, n))[:, None]


def _shade(scene, rays, obj_best, normals):
    # background shows the ambient term alone
    out = np.tile(np.asarray(scene.ambient, dtype=float), (len(rays), 1))
    view = -rays
    objects = list(scene.spheres) + list(scene.meshes)
    for key in np.unique(obj_best[obj_best >= 0]):
        sel = obj_best == key
        material = objects[key].material
        N = normals[sel]
        V = view[sel]
        if isinstance(material, Mirror):
            col = np.outer(np.ones(len(N)), np.asarray(scene.ambient) * np.asarray(material.tint))
            refl = 2.0 * _dot3(N, V)[:, None] * N - V
            for light in scene.lights:
                L = np.asarray(light.direction, dtype=float)
                cosang = np.clip(_dot3(refl, L) / np.sqrt(_dot3(refl, refl)), -1.0, 1.0)
                inside = cosang >= math.cos(math.radians(light.angular_radius_deg))
                col[inside] += np.asarray(light.radiance, dtype=float)
        else:
            albedo = np.asarray(material.diffuse_albedo, dtype=float)
            col = np.outer(np.ones(len(N)), np.asarray(scene.ambient) * albedo)
            for light in scene.lights:
                L = np.asarray(light.direction, dtype=float)
                cos_l = np.maximum(_dot3(N, L), 0.0)
                spec = _ts_array(N, L, V, material.rho_s, material.m, material.refraction_index)
                col += (albedo[None, :] * cos_l[:, None] + (spec * cos_l)[:, None]) * np.asarray(light.radiance)
        out[sel] = col
    return out


def _render_rows(scene, camera, rays_all, row0, row1, channel="color"):
    w = camera.width
    rays = rays_all[row0:row1].reshape(-1, 3)
    t_best = np.full(len(rays), np.inf)
    obj_best = np.full(len(rays), -1, dtype=np.int64)
    normals = np.zeros_like(rays)
    _hit_spheres(scene, rays, t_best, obj_best, normals)
    _hit_meshes(scene, camera, rays, row0, t_best, obj_best, normals)
    if channel == "normals":
        return normals.reshape(row1 - row0, w, 3), np.isfinite(t_best).reshape(row1 - row0, w)
    return _shade(scene, rays, obj_best, normals).reshape(row1 - row0, w, 3)


def _stripes(h, workers):
    workers = max(1, min(int(workers), h))
    b = np.linspace(0, h, workers + 1).astype(int)
    return list(zip(b[:-1], b[1:]))


def render_radiance(scene: Scene, camera: PinholeCamera, workers: int = 1) -> np.ndarray:
    """Linear RGB radiance per pixel, shape (H, W, 3), before tone mapping."""
    rays = camera.pixel_rays()
    stripes = _stripes(camera.height, workers)
    if len(stripes) == 1:
        parts = [_render_rows(scene, camera, rays, *stripes[0])]
    else:
        with ThreadPoolExecutor(len(stripes)) as pool:
            parts = list(pool.map(lambda s: _render_rows(scene, camera, rays, *s), stripes))
    return np.concatenate(parts, axis=0)


def render(scene: Scene, camera: PinholeCamera, workers: int = 1) -> RasterImage:
    """One ray per pixel centre; clamp to [0, 1] and quantise to 8 bits, no gamma."""
    radiance = render_radiance(scene, camera, workers)
    return RasterImage(np.floor(np.clip(radiance, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8))


def render_normals(scene: Scene, camera: PinholeCamera) -> tuple[np.ndarray, np.ndarray]:
    """Ray-traced surface normals and hit mask, used to cross-check the rasteriser."""
    return _render_rows(scene, camera, camera.pixel_rays(), 0, camera.height, channel="normals")


def analytic_sphere_highlight(center, radius: float, light_dir, camera: PinholeCamera) -> tuple[float, float]:
    """Pixel of the mirror reflection of a distant light on a sphere.

    The reflecting normal lies on the great circle through the toward-camera
    direction and the light direction; it is found by bisection on the angle
    along that arc so that it bisects the local view and light directions.
    """
    c_vec = np.asarray(center, dtype=float)
    l = normalize(light_dir)
    toward_cam = -normalize(c_vec)
    total = angle_between(toward_cam, l)
    if total > math.pi - 1e-9:
        raise NoVisibleHighlight("light is directly behind the sphere")
    if total < 1e-15:
        point = c_vec + radius * toward_cam
        return project(camera, point)
    e2 = normalize(l - (l @ toward_cam) * toward_cam)

    def normal(theta):
        return math.cos(theta) * toward_cam + math.sin(theta) * e2

    def mismatch(theta):
        n = normal(theta)
        v = -normalize(c_vec + radius * n)
        return angle_between(n, v) - angle_between(n, l)

    lo, hi = 0.0, total
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mismatch(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    n = normal(0.5 * (lo + hi))
    point = c_vec + radius * n
    v = -normalize(point)
    if n @ v <= 0 or n @ l <= 0:
        raise NoVisibleHighlight("reflecting point faces away from the camera")
    return project(camera, point)


# -- scene files -------------------------------------------------------------


def _vec(data, path, n=3):
    if not isinstance(data, (list, tuple)) or len(data) != n:
        raise SceneFormatError(f"{path}: expected a list of {n} numbers")
    try:
        return tuple(float(x) for x in data)
    except (TypeError, ValueError):
        raise SceneFormatError(f"{path}: expected numbers") from None


def _material(data, path):
    if not isinstance(data, dict) or "type" not in data:
        raise SceneFormatError(f"{path}: material needs a 'type'")
    kind = data["type"]
    if kind == "mirror":
        return Mirror(_vec(data.get("tint", Mirror.tint), f"{path}.tint"))
    if kind == "skin":
        try:
            return Skin(
                rho_s=float(data.get("rho_s", 0.497)),
                m=float(data.get("m", 0.266)),
                refraction_index=float(data.get("refraction_index", 1.38)),
                diffuse_albedo=_vec(data.get("diffuse_albedo", Skin.diffuse_albedo), f"{path}.diffuse_albedo"),
            )
        except (TypeError, ValueError) as exc:
            raise SceneFormatError(f"{path}: {exc}") from None
    raise SceneFormatError(f"{path}.type: unknown material {kind!r}")


def scene_from_dict(data: dict, base_dir=".") -> Scene:
    if not isinstance(data, dict):
        raise SceneFormatError("<root>: scene must be an object")
    base = Path(base_dir)
    spheres, meshes, lights = [], [], []
    for i, s in enumerate(data.get("spheres", [])):
        p = f"spheres[{i}]"
        if not isinstance(s, dict) or "center" not in s or "radius" not in s:
            raise SceneFormatError(f"{p}: needs 'center' and 'radius'")
        try:
            spheres.append(SphereObject(_vec(s["center"], f"{p}.center"), float(s["radius"]), _material(s.get("material", {"type": "mirror"}), f"{p}.material")))
        except ValueError as exc:
            raise SceneFormatError(f"{p}: {exc}") from None
    for i, m in enumerate(data.get("meshes", [])):
        p = f"meshes[{i}]"
        if not isinstance(m, dict) or "obj" not in m:
            raise SceneFormatError(f"{p}: needs 'obj'")
        mesh = load_obj(base / m["obj"], base / m["tags"] if m.get("tags") else None)
        if "rotation" in m:
            rot = np.asarray(m["rotation"], dtype=float)
        else:
            rot = rotvec_to_matrix(_vec(m.get("rotvec", [0, 0, 0]), f"{p}.rotvec"))
        try:
            pose = RigidTransform(rot, _vec(m.get("translation", [0, 0, 0]), f"{p}.translation"))
        except ValueError as exc:
            raise SceneFormatError(f"{p}: {exc}") from None
        meshes.append(MeshObject(mesh, pose, _material(m.get("material", {"type": "skin"}), f"{p}.material")))
    for i, light in enumerate(data.get("lights", [])):
        p = f"lights[{i}]"
        if not isinstance(light, dict) or "direction" not in light:
            raise SceneFormatError(f"{p}: needs 'direction'")
        d = _vec(light["direction"], f"{p}.direction")
        if np.linalg.norm(d) == 0:
            raise SceneFormatError(f"{p}.direction: zero vector")
        lights.append(
            DirectionalLight(
                tuple(normalize(d)),
                _vec(light.get("radiance", [1, 1, 1]), f"{p}.radiance"),
                float(light.get("angular_radius_deg", 0.5)),
            )
        )
    return Scene(tuple(spheres), tuple(meshes), tuple(lights), _vec(data.get("ambient", [0, 0, 0]), "ambient"))


def load_scene(path) -> Scene:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return scene_from_dict(data, path.parent)
