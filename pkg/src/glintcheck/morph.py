"""Landmark-based face morphing: average, triangulate, warp, blend."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (
    Collinear,
    DegenerateTriangle,
    DimensionMismatch,
    DuplicatePoints,
    LengthMismatch,
    TopologyMismatch,
)
from .imageio import RasterImage


@dataclass(frozen=True)
class MorphConfig:
    alpha: float = 0.5
    # ((u_a, v_a), (u_b, v_b)) pairs added to both landmark lists
    manual_extra_points: tuple = ()

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class TriangleMesh2D:
    points: np.ndarray  # (n, 2)
    triangles: np.ndarray  # (m, 3) int

    def __post_init__(self):
        p = np.array(self.points, dtype=float).reshape(-1, 2)
        t = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(p)):
            raise ValueError("triangle index out of range")
        p.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "triangles", t)

    def areas(self) -> np.ndarray:
        a, b, c = (self.points[self.triangles[:, k]] for k in range(3))
        return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def average_landmarks(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    if len(a) != len(b):
        raise LengthMismatch(f"landmark counts differ: {len(a)} vs {len(b)}")
    return (a + b) / 2.0


# -- exact predicates ------------------------------------------------------


def _orient(p, q, r) -> int:
    d = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    return (d > 0) - (d < 0)


def _incircle(a, b, c, d) -> int:
    """>0 when d is strictly inside the circle through CCW a, b, c."""
    adx, ady = a[0] - d[0], a[1] - d[1]
    bdx, bdy = b[0] - d[0], b[1] - d[1]
    cdx, cdy = c[0] - d[0], c[1] - d[1]
    det = (
        (adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
        - (bdx * bdx + bdy * bdy) * (adx * cdy - cdx * ady)
        + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady)
    )
    return (det > 0) - (det < 0)


class _Triangulation:
    def __init__(self, pts):
        self.p = pts
        self.tris: dict[int, tuple[int, int, int]] = {}
        self.edge: dict[tuple[int, int], int] = {}
        self._next = 0

    def add(self, a, b, c):
        tid = self._next
        self._next += 1
        self.tris[tid] = (a, b, c)
        for e in ((a, b), (b, c), (c, a)):
            self.edge[e] = tid
        return tid

    def remove(self, tid):
        a, b, c = self.tris.pop(tid)
        for e in ((a, b), (b, c), (c, a)):
            del self.edge[e]

    def opposite(self, a, b):
        """Third vertex of the triangle holding directed edge a->b."""
        x, y, z = self.tris[self.edge[(a, b)]]
        return {(x, y): z, (y, z): x, (z, x): y}[(a, b)]

    def flip(self, a, b):
        c = self.opposite(a, b)
        d = self.opposite(b, a)
        self.remove(self.edge[(a, b)])
        self.remove(self.edge[(b, a)])
        self.add(c, a, d)
        self.add(d, b, c)
        return c, d


def _sweep(t: _Triangulation):
    p = t.p
    n = len(p)
    k = 2
    while k < n and _orient(p[0], p[1], p[k]) == 0:
        k += 1
    if k == n:
        raise Collinear("all points are collinear")
    chain = list(range(k))
    for i in range(k - 1):
        a, b = chain[i], chain[i + 1]
        if _orient(p[a], p[b], p[k]) > 0:
            t.add(a, b, k)
        else:
            t.add(b, a, k)
    hull = chain + [k] if _orient(p[0], p[1], p[k]) > 0 else chain[::-1] + [k]
    for q in range(k + 1, n):
        m = len(hull)
        vis = [_orient(p[hull[i]], p[hull[(i + 1) % m]], p[q]) < 0 for i in range(m)]
        s = next(i for i in range(m) if vis[i] and not vis[i - 1])
        count = 0
        while vis[(s + count) % m]:
            a, b = hull[(s + count) % m], hull[(s + count + 1) % m]
            t.add(b, a, q)
            count += 1
        rot = hull[s:] + hull[:s]
        hull = [rot[0], q] + rot[count:]


def _legalize(t: _Triangulation):
    p = t.p
    stack = [e for e in t.edge if e[0] < e[1] and (e[1], e[0]) in t.edge]
    while stack:
        a, b = stack.pop()
        if (a, b) not in t.edge or (b, a) not in t.edge:
            continue
        c = t.opposite(a, b)
        d = t.opposite(b, a)
        if _incircle(p[a], p[b], p[c], p[d]) > 0:
            t.flip(a, b)
            stack.extend([(a, d), (d, b), (b, c), (c, a)])


def _break_ties(t: _Triangulation):
    """Make every cocircular quad use the diagonal through its smallest point."""
    p = t.p
    for _ in range(10 * len(p) ** 2):
        changed = False
        for a, b in sorted(t.edge):
            if a > b or (a, b) not in t.edge or (b, a) not in t.edge:
                continue
            c = t.opposite(a, b)
            d = t.opposite(b, a)
            if min(a, b, c, d) in (a, b):
                continue
            if _incircle(p[a], p[b], p[c], p[d]) != 0:
                continue
            if _orient(p[c], p[a], p[d]) > 0 and _orient(p[d], p[b], p[c]) > 0:
                t.flip(a, b)
                changed = True
        if not changed:
            return
    raise RuntimeError("cocircular tie-breaking did not settle")


def delaunay(points) -> TriangleMesh2D:
    """Delaunay triangulation with exact rational predicates.

    Points are processed in lexicographic (u, v) order.  Where four or more
    points are cocircular, each such quad takes the diagonal incident to its
    lexicographically smallest point, so the output depends only on the
    point set.  Triangles are returned counter-clockwise in (u, v) axes with
    their smallest index first, sorted.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise Collinear("need at least 3 points")
    order = sorted(range(len(pts)), key=lambda i: (pts[i, 0], pts[i, 1]))
    exact = [(Fraction(float(pts[i, 0])), Fraction(float(pts[i, 1]))) for i in order]
    for i in range(1, len(exact)):
        if exact[i] == exact[i - 1]:
            raise DuplicatePoints(f"duplicate point {tuple(pts[order[i]])}")
    t = _Triangulation(exact)
    _sweep(t)
    _legalize(t)
    _break_ties(t)
    out = []
    for a, b, c in t.tris.values():
        tri = [order[a], order[b], order[c]]
        r = tri.index(min(tri))
        out.append(tri[r:] + tri[:r])
    out.sort()
    return TriangleMesh2D(pts, np.array(out, dtype=np.int64))


def empty_circumcircle_violations(mesh: TriangleMesh2D) -> list[tuple[int, int]]:
    """Brute force: (triangle, point) pairs where the point is strictly inside."""
    pts = [(Fraction(float(u)), Fraction(float(v))) for u, v in mesh.points]
    bad = []
    for ti, (a, b, c) in enumerate(mesh.triangles.tolist()):
        if _orient(pts[a], pts[b], pts[c]) < 0:
            b, c = c, b
        for j, q in enumerate(pts):
            if j not in (a, b, c) and _incircle(pts[a], pts[b], pts[c], q) > 0:
                bad.append((ti, j))
    return bad


# -- raster operations -----------------------------------------------------


def _round_half_away(x: np.ndarray) -> np.ndarray:
    # snap away float noise so mathematically equal inputs round identically
    x = np.round(x, 9)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _bilinear(src: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    h, w = src.shape[:2]
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    s = src.astype(float)
    top = s[y0, x0] * (1 - fx) + s[y0, x1] * fx
    bot = s[y1, x0] * (1 - fx) + s[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def warp_affine(img: RasterImage, src: TriangleMesh2D, dst: TriangleMesh2D) -> RasterImage:
    """Piecewise-affine warp carrying each ``src`` triangle onto its ``dst`` twin."""
    if len(src.points) != len(dst.points) or not np.array_equal(src.triangles, dst.triangles):
        raise TopologyMismatch("source and destination meshes must share topology")
    if np.any(np.abs(dst.areas()) < 1e-9):
        raise DegenerateTriangle("destination mesh contains a zero-area triangle")
    h, w = img.height, img.width
    out = img.pixels.astype(float)
    for tri in dst.triangles:
        d = dst.points[tri]
        s = src.points[tri]
        # solve s = M [d; 1] for the 2x3 affine map
        m = np.linalg.solve(np.column_stack([d, np.ones(3)]), s).T
        u0 = max(int(np.ceil(d[:, 0].min())), 0)
        u1 = min(int(np.floor(d[:, 0].max())), w - 1)
        v0 = max(int(np.ceil(d[:, 1].min())), 0)
        v1 = min(int(np.floor(d[:, 1].max())), h - 1)
        if u0 > u1 or v0 > v1:
            continue
        pu, pv = np.meshgrid(np.arange(u0, u1 + 1, dtype=float), np.arange(v0, v1 + 1, dtype=float))
        pu, pv = pu.ravel(), pv.ravel()
        # barycentric inside test with a small tolerance so shared edges are covered
        t_mat = np.array([[d[1, 0] - d[0, 0], d[2, 0] - d[0, 0]], [d[1, 1] - d[0, 1], d[2, 1] - d[0, 1]]])
        lam = np.linalg.solve(t_mat, np.vstack([pu - d[0, 0], pv - d[0, 1]]))
        eps = 1e-9
        inside = (lam[0] >= -eps) & (lam[1] >= -eps) & (lam[0] + lam[1] <= 1 + eps)
        if not inside.any():
            continue
        pu, pv = pu[inside], pv[inside]
        sx = m[0, 0] * pu + m[0, 1] * pv + m[0, 2]
        sy = m[1, 0] * pu + m[1, 1] * pv + m[1, 2]
        out[pv.astype(np.int64), pu.astype(np.int64)] = _bilinear(img.pixels, sx, sy)
    return RasterImage(np.clip(_round_half_away(out), 0, 255).astype(np.uint8))


def blend(a: RasterImage, b: RasterImage, alpha: float) -> RasterImage:
    """Per-channel ``alpha * a + (1 - alpha) * b``, rounded half away from zero."""
    if a.pixels.shape != b.pixels.shape:
        raise DimensionMismatch(f"image sizes differ: {a.pixels.shape} vs {b.pixels.shape}")
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    mixed = alpha * a.pixels.astype(float) + (1.0 - alpha) * b.pixels.astype(float)
    return RasterImage(np.clip(_round_half_away(mixed), 0, 255).astype(np.uint8))


def make_morph(img_a: RasterImage, img_b: RasterImage, lm_a, lm_b, cfg: MorphConfig = MorphConfig()) -> RasterImage:
    if img_a.pixels.shape != img_b.pixels.shape:
        raise DimensionMismatch("morph inputs must have the same size")
    lm_a = np.asarray(lm_a, dtype=float).reshape(-1, 2)
    lm_b = np.asarray(lm_b, dtype=float).reshape(-1, 2)
    if len(lm_a) != len(lm_b):
        raise LengthMismatch(f"landmark counts differ: {len(lm_a)} vs {len(lm_b)}")
    if cfg.manual_extra_points:
        extra = np.asarray(cfg.manual_extra_points, dtype=float).reshape(-1, 2, 2)
        lm_a = np.vstack([lm_a, extra[:, 0]])
        lm_b = np.vstack([lm_b, extra[:, 1]])
    target = average_landmarks(lm_a, lm_b)
    topo = delaunay(target)
    warped_a = warp_affine(img_a, TriangleMesh2D(lm_a, topo.triangles), topo)
    warped_b = warp_affine(img_b, TriangleMesh2D(lm_b, topo.triangles), topo)
    return blend(warped_a, warped_b, cfg.alpha)
