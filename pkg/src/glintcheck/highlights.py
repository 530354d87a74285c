"""Highlight detection, synthesis from normals, and mask comparison."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .brdf import SkinReflectance, torrance_sparrow_many
from .errors import AllZeroMap, BothEmpty, DimensionMismatch, EmptyNormalMap
from .eye import LightEstimate
from .geometry import PinholeCamera
from .imageio import RasterImage

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)

RED = (255, 0, 0)
YELLOW = (255, 255, 0)
GREEN = (0, 255, 0)


@dataclass(frozen=True, eq=False)
class Component:
    pixels: np.ndarray  # (k, 2) integer (u, v)
    centroid: tuple[float, float]

    @property
    def size(self) -> int:
        return len(self.pixels)


@dataclass(frozen=True, eq=False)
class HighlightMask:
    bits: np.ndarray  # (height, width) bool
    components: list[Component] = field(default_factory=list)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def area(self) -> int:
        return int(self.bits.sum())

    @classmethod
    def from_bits(cls, bits: np.ndarray, min_component_size: int = 1) -> "HighlightMask":
        """Label 8-connected components and drop those below the size floor."""
        bits = np.asarray(bits, dtype=bool)
        labels, n = ndimage.label(bits, structure=EIGHT_CONNECTED)
        kept = np.zeros_like(bits)
        comps = []
        for idx, sl in enumerate(ndimage.find_objects(labels), start=1):
            sub = labels[sl] == idx
            rows, cols = np.nonzero(sub)
            if len(rows) < min_component_size:
                continue
            rows = rows + sl[0].start
            cols = cols + sl[1].start
            kept[rows, cols] = True
            comps.append(Component(np.column_stack([cols, rows]), (float(cols.mean()), float(rows.mean()))))
        kept.setflags(write=False)
        return cls(kept, comps)


@dataclass(frozen=True, eq=False)
class SpecularMap:
    intensity: np.ndarray  # (height, width) float, zero outside coverage

    @property
    def width(self) -> int:
        return self.intensity.shape[1]

    @property
    def height(self) -> int:
        return self.intensity.shape[0]


@dataclass
class ComparisonReport:
    iou: float
    dice: float
    displacements: list[tuple[float, float, float]]  # (du, dv, magnitude), synthetic minus detected
    unmatched_detected: int
    unmatched_synthetic: int
    decision_score: float
    detected_area: int = 0
    synthetic_area: int = 0

    def to_dict(self) -> dict:
        return {
            "iou": self.iou,
            "dice": self.dice,
            "displacements": [{"du": du, "dv": dv, "magnitude": mag} for du, dv, mag in self.displacements],
            "unmatched_detected": self.unmatched_detected,
            "unmatched_synthetic": self.unmatched_synthetic,
            "decision_score": self.decision_score,
            "detected_area": self.detected_area,
            "synthetic_area": self.synthetic_area,
        }


def hsv_saturation_value(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """S and V of the hexcone HSV model; S is 0 for black pixels."""
    p = np.asarray(pixels, dtype=np.int32)
    mx = p.max(axis=-1)
    mn = p.min(axis=-1)
    s = np.where(mx == 0, 0.0, (mx - mn) / np.where(mx == 0, 1, mx))
    return s, mx / 255.0


def detect_highlights(
    img: RasterImage,
    region: np.ndarray | None = None,
    sat_threshold: float = 0.12,
    value_floor: float = 0.65,
    min_component_size: int = 4,
) -> HighlightMask:
    """Mark bright, unsaturated pixels as specular."""
    if not (0 <= sat_threshold <= 1 and 0 <= value_floor <= 1):
        raise ValueError("thresholds must lie in [0, 1]")
    s, v = hsv_saturation_value(img.pixels)
    bits = (s < sat_threshold) & (v >= value_floor)
    if region is not None:
        region = np.asarray(region, dtype=bool)
        if region.shape != bits.shape:
            raise DimensionMismatch(f"region {region.shape} does not match image {bits.shape}")
        bits &= region
    return HighlightMask.from_bits(bits, min_component_size)


def synthesize_highlights(nmap, lights: LightEstimate, camera: PinholeCamera, params: SkinReflectance) -> SpecularMap:
    """Expected specular radiance (unit light radiance) for each covered pixel."""
    cov = nmap.coverage
    if not cov.any():
        raise EmptyNormalMap("normal map covers no pixels")
    if (nmap.width, nmap.height) != camera.image_size:
        raise DimensionMismatch("normal map and camera image size differ")
    rays = camera.pixel_rays()[cov]
    n = nmap.normals[cov]
    v = -rays
    total = np.zeros(len(n))
    for light in lights.directions:
        nl = n @ light
        total += torrance_sparrow_many(n, light, v, params) * np.maximum(0.0, nl)
    out = np.zeros(cov.shape)
    out[cov] = total
    out.setflags(write=False)
    return SpecularMap(out)


def binarize(smap: SpecularMap, rel_threshold: float = 0.5, min_component_size: int = 1) -> HighlightMask:
    if not 0 < rel_threshold < 1:
        raise ValueError("rel_threshold must lie in (0, 1)")
    peak = float(smap.intensity.max()) if smap.intensity.size else 0.0
    if peak <= 0:
        raise AllZeroMap("specular map has no positive intensity")
    return HighlightMask.from_bits(smap.intensity >= rel_threshold * peak, min_component_size)


def compare_masks(detected: HighlightMask, synthetic: HighlightMask, match_radius: float = 25.0) -> ComparisonReport:
    if detected.bits.shape != synthetic.bits.shape:
        raise DimensionMismatch(f"mask shapes differ: {detected.bits.shape} vs {synthetic.bits.shape}")
    a, b = detected.bits, synthetic.bits
    na, nb = int(a.sum()), int(b.sum())
    if na == 0 and nb == 0:
        raise BothEmpty("neither mask contains highlight pixels")
    inter = int((a & b).sum())
    union = na + nb - inter
    iou = inter / union
    dice = 2.0 * inter / (na + nb)

    pairs = []
    for i, cd in enumerate(detected.components):
        for j, cs in enumerate(synthetic.components):
            du = cs.centroid[0] - cd.centroid[0]
            dv = cs.centroid[1] - cd.centroid[1]
            dist = float(np.hypot(du, dv))
            if dist <= match_radius:
                pairs.append((dist, i, j, du, dv))
    pairs.sort()
    used_d, used_s, disp = set(), set(), []
    for dist, i, j, du, dv in pairs:
        if i in used_d or j in used_s:
            continue
        used_d.add(i)
        used_s.add(j)
        disp.append((du, dv, dist))
    return ComparisonReport(
        iou=iou,
        dice=dice,
        displacements=disp,
        unmatched_detected=len(detected.components) - len(used_d),
        unmatched_synthetic=len(synthetic.components) - len(used_s),
        decision_score=iou,
        detected_area=na,
        synthetic_area=nb,
    )


def overlay(detected: HighlightMask, synthetic: HighlightMask, base: RasterImage) -> RasterImage:
    """Paint detected-only red, synthetic-only yellow and overlap green."""
    a, b = detected.bits, synthetic.bits
    if a.shape != b.shape or a.shape != base.pixels.shape[:2]:
        raise DimensionMismatch("overlay inputs must share dimensions")
    out = base.pixels.copy()
    out[a & ~b] = RED
    out[b & ~a] = YELLOW
    out[a & b] = GREEN
    return RasterImage(out)


def convex_hull(points) -> np.ndarray:
    """Andrew's monotone chain; counter-clockwise in (u, v) without repeats."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float).tolist())))
    if len(pts) <= 2:
        return np.array(pts, dtype=float).reshape(-1, 2)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=float)


def region_from_points(points, width: int, height: int, dilate_px: float = 10.0) -> np.ndarray:
    """Pixels within ``dilate_px`` of the convex hull of ``points``."""
    hull = convex_hull(points)
    uu, vv = np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))
    inside = np.zeros((height, width), dtype=bool)
    if len(hull) >= 3:
        inside[:] = True
        for k in range(len(hull)):
            (x0, y0), (x1, y1) = hull[k], hull[(k + 1) % len(hull)]
            inside &= (x1 - x0) * (vv - y0) - (y1 - y0) * (uu - x0) >= 0
    else:
        for u, v in hull:
            iu, iv = int(round(u)), int(round(v))
            if 0 <= iu < width and 0 <= iv < height:
                inside[iv, iu] = True
    if dilate_px > 0:
        if not inside.any():
            return inside
        dist = ndimage.distance_transform_edt(~inside)
        inside = dist <= dilate_px
    return inside
