"""Landmark-driven face-pose fitting and z-buffered normal rasterisation."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import EmptyProjection, InsufficientCorrespondences
from .geometry import (
    Correspondence,
    PinholeCamera,
    RigidTransform,
    backproject,
    fit_rigid,
)

LandmarkSet = Mapping[str, tuple[float, float]]


@dataclass(frozen=True, eq=False)
class NormalMap:
    normals: np.ndarray  # (H, W, 3) camera-space unit normals, zero where uncovered
    coverage: np.ndarray  # (H, W) bool
    depth: np.ndarray  # (H, W) mm, +inf where uncovered
    triangle_index: np.ndarray  # (H, W) int, -1 where uncovered

    @property
    def width(self) -> int:
        return self.coverage.shape[1]

    @property
    def height(self) -> int:
        return self.coverage.shape[0]


def mesh_correspondences(mesh, landmarks: LandmarkSet) -> list[Correspondence]:
    names = sorted(set(mesh.landmark_tags) & set(landmarks))
    return [Correspondence(mesh.vertices[mesh.landmark_tags[n]], landmarks[n]) for n in names]


def initial_face_pose(mesh, landmarks: LandmarkSet, camera: PinholeCamera, depth: float = 600.0) -> RigidTransform:
    """Frontal pose placing the tagged-vertex centroid on the landmark-centroid ray."""
    corr = mesh_correspondences(mesh, landmarks)
    if not corr:
        raise InsufficientCorrespondences("mesh tags and landmarks share no names")
    model_c = np.mean([c.model_point for c in corr], axis=0)
    image_c = np.mean([c.image_point for c in corr], axis=0)
    return RigidTransform(np.eye(3), backproject(camera, image_c, depth) - model_c)


def fit_mesh_pose(
    mesh,
    landmarks: LandmarkSet,
    camera: PinholeCamera,
    init: RigidTransform,
    max_iter: int = 100,
    rel_tol: float = 1e-6,
) -> RigidTransform:
    corr = mesh_correspondences(mesh, landmarks)
    if len(corr) < 4:
        raise InsufficientCorrespondences(f"only {len(corr)} tagged landmarks match the landmark set; need 4")
    pose, _ = fit_rigid(corr, init, camera, max_iter=max_iter, rel_tol=rel_tol)
    return pose


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _is_top_left(ax, ay, bx, by) -> bool:
    # for the positive-area winding used below (clockwise on screen, v down)
    dx, dy = bx - ax, by - ay
    return (dy == 0 and dx > 0) or dy < 0


def _raster_stripe(verts_c, normals_c, uv, triangles, camera, row0, row1):
    w = camera.width
    h = row1 - row0
    zbuf = np.full((h, w), np.inf)
    nbuf = np.zeros((h, w, 3))
    tbuf = np.full((h, w), -1, dtype=np.int64)
    f = camera.focal_px
    cx, cy = camera.principal_point
    for ti, (ia, ib, ic) in enumerate(triangles):
        za, zb, zc = verts_c[ia, 2], verts_c[ib, 2], verts_c[ic, 2]
        if za <= 0 or zb <= 0 or zc <= 0:
            continue
        (ax, ay), (bx, by), (cx_, cy_) = uv[ia], uv[ib], uv[ic]
        area = _edge(ax, ay, bx, by, cx_, cy_)
        if area == 0:
            continue
        na, nb, nc = normals_c[ia], normals_c[ib], normals_c[ic]
        if area < 0:
            bx, by, cx_, cy_ = cx_, cy_, bx, by
            zb, zc = zc, zb
            nb, nc = nc, nb
            area = -area
        u0 = max(int(np.ceil(min(ax, bx, cx_))), 0)
        u1 = min(int(np.floor(max(ax, bx, cx_))), w - 1)
        v0 = max(int(np.ceil(min(ay, by, cy_))), row0)
        v1 = min(int(np.floor(max(ay, by, cy_))), row1 - 1)
        if u0 > u1 or v0 > v1:
            continue
        pu, pv = np.meshgrid(np.arange(u0, u1 + 1, dtype=float), np.arange(v0, v1 + 1, dtype=float))
        w0 = _edge(bx, by, cx_, cy_, pu, pv)
        w1 = _edge(cx_, cy_, ax, ay, pu, pv)
        w2 = _edge(ax, ay, bx, by, pu, pv)
        inside = (
            ((w0 > 0) | ((w0 == 0) & _is_top_left(bx, by, cx_, cy_)))
            & ((w1 > 0) | ((w1 == 0) & _is_top_left(cx_, cy_, ax, ay)))
            & ((w2 > 0) | ((w2 == 0) & _is_top_left(ax, ay, bx, by)))
        )
        if not inside.any():
            continue
        # perspective-correct barycentrics
        qa = w0[inside] / area / za
        qb = w1[inside] / area / zb
        qc = w2[inside] / area / zc
        depth = 1.0 / (qa + qb + qc)
        rows = pv[inside].astype(np.int64) - row0
        cols = pu[inside].astype(np.int64)
        closer = depth < zbuf[rows, cols]
        if not closer.any():
            continue
        rows, cols, depth = rows[closer], cols[closer], depth[closer]
        ba, bb, bc = qa[closer] * depth, qb[closer] * depth, qc[closer] * depth
        n = ba[:, None] * na + bb[:, None] * nb + bc[:, None] * nc
        zbuf[rows, cols] = depth
        nbuf[rows, cols] = n
        tbuf[rows, cols] = ti
    # normalise and drop pixels whose winning surface faces away from the camera
    covered = np.isfinite(zbuf)
    nx, ny, nz = nbuf[..., 0], nbuf[..., 1], nbuf[..., 2]
    norm = np.sqrt(nx * nx + ny * ny + nz * nz)
    safe = np.where(norm > 0, norm, 1.0)
    nbuf = nbuf / safe[..., None]
    vv, uu = np.mgrid[row0:row1, 0:w].astype(float)
    px = (uu - cx) / f
    py = (vv - cy) / f
    # view vector is -(px, py, 1) * depth; only its sign matters
    facing = -(nbuf[..., 0] * px + nbuf[..., 1] * py + nbuf[..., 2]) > 0
    covered &= (norm > 0) & facing & (nbuf[..., 2] < 0)
    nbuf[~covered] = 0.0
    zbuf[~covered] = np.inf
    tbuf[~covered] = -1
    return covered, nbuf, zbuf, tbuf


def rasterize_normals(mesh, pose: RigidTransform, camera: PinholeCamera, workers: int = 1) -> NormalMap:
    """Per-pixel camera-space normals of the posed mesh.

    Pixel centres are sampled at integer (u, v); edge ties follow the
    top-left rule and depth ties keep the lower triangle index.
    """
    verts_c = pose.apply(mesh.vertices)
    normals_c = pose.apply_direction(mesh.vertex_normals)
    if not np.any(verts_c[:, 2] > 0):
        raise EmptyProjection("mesh lies entirely behind the camera")
    z = np.where(verts_c[:, 2] > 0, verts_c[:, 2], 1.0)
    cx, cy = camera.principal_point
    uv = np.column_stack([camera.focal_px * verts_c[:, 0] / z + cx, camera.focal_px * verts_c[:, 1] / z + cy])
    tris = mesh.triangles.tolist()
    h = camera.height
    workers = max(1, min(int(workers), h))
    bounds = np.linspace(0, h, workers + 1).astype(int)
    stripes = list(zip(bounds[:-1], bounds[1:]))
    if workers == 1:
        parts = [_raster_stripe(verts_c, normals_c, uv, tris, camera, *stripes[0])]
    else:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda s: _raster_stripe(verts_c, normals_c, uv, tris, camera, *s), stripes))
    coverage = np.concatenate([p[0] for p in parts])
    if not coverage.any():
        raise EmptyProjection("no triangle rasterises inside the image")
    out = NormalMap(
        normals=np.concatenate([p[1] for p in parts]),
        coverage=coverage,
        depth=np.concatenate([p[2] for p in parts]),
        triangle_index=np.concatenate([p[3] for p in parts]),
    )
    for a in (out.normals, out.coverage, out.depth, out.triangle_index):
        a.setflags(write=False)
    return out
