"""Torrance-Sparrow specular reflectance with a Beckmann facet distribution.

The scalar entry points validate their domain and raise; the ``*_many``
variants work on stacked arrays and return zero for back-facing samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BackFacing, DegenerateHalfway, OutOfDomain


@dataclass(frozen=True)
class SkinReflectance:
    # measured for a white-to-olive skinned male in his twenties
    rho_s: float = 0.497
    m: float = 0.266
    refraction_index: float = 1.38

    def __post_init__(self):
        if not self.rho_s > 0:
            raise ValueError("rho_s must be positive")
        if not 0 < self.m < 1:
            raise ValueError("roughness m must lie in (0, 1)")
        if not self.refraction_index > 1:
            raise ValueError("refraction_index must exceed 1")


def _dot(a, b):
    return np.sum(np.asarray(a, dtype=float) * np.asarray(b, dtype=float), axis=-1)


def halfway(L, V) -> np.ndarray:
    s = np.asarray(L, dtype=float) + np.asarray(V, dtype=float)
    n = np.linalg.norm(s)
    if n < 1e-12:
        raise DegenerateHalfway("light and view directions are antipodal")
    return s / n


def beckmann_d(n_dot_h, m: float):
    """Beckmann facet distribution evaluated at the facet-normal cosine.

    The exponent uses tan of the angle between N and H, written through the
    cosine as ``tan^2 = (1 - c^2) / c^2``.  Grazing values underflow to 0.
    """
    c = np.asarray(n_dot_h, dtype=float)
    if np.any(c <= 0) or np.any(c > 1):
        raise OutOfDomain("n_dot_h must lie in (0, 1]")
    c2 = c * c
    tan2 = (1.0 - c2) / c2
    with np.errstate(under="ignore"):
        out = np.exp(-tan2 / (m * m)) / (m * m * c2 * c2)
    return float(out) if out.ndim == 0 else out


def geometric_attenuation(N, H, V, L):
    nh, nv, nl, vh = _dot(N, H), _dot(N, V), _dot(N, L), _dot(V, H)
    if np.any(vh <= 0):
        raise OutOfDomain("V.H must be positive")
    out = np.minimum(1.0, np.minimum(2.0 * nh * nv / vh, 2.0 * nh * nl / vh))
    return float(out) if np.ndim(out) == 0 else out


def fresnel(cos_i, n: float):
    """Unpolarised dielectric reflectance from the exact Fresnel equations."""
    c = np.asarray(cos_i, dtype=float)
    if np.any(c <= 0) or np.any(c > 1) or not n > 1:
        raise OutOfDomain("fresnel needs 0 < cos_i <= 1 and n > 1")
    sin_t2 = (1.0 - c * c) / (n * n)
    cos_t = np.sqrt(1.0 - sin_t2)
    r_perp = (c - n * cos_t) / (c + n * cos_t)
    r_par = (n * c - cos_t) / (n * c + cos_t)
    out = 0.5 * (r_perp * r_perp + r_par * r_par)
    return float(out) if out.ndim == 0 else out


def torrance_sparrow(N, L, V, params: SkinReflectance = SkinReflectance()) -> float:
    """BRDF value (1/sr) for unit normal, light and view directions."""
    nl, nv = float(_dot(N, L)), float(_dot(N, V))
    if nl <= 0 or nv <= 0:
        raise BackFacing(f"N.L={nl:.3g}, N.V={nv:.3g}: surface is not front-lit and front-viewed")
    H = halfway(L, V)
    nh = min(float(_dot(N, H)), 1.0)
    vh = min(float(_dot(V, H)), 1.0)
    d = beckmann_d(nh, params.m)
    g = geometric_attenuation(N, H, V, L)
    f = fresnel(vh, params.refraction_index)
    return params.rho_s / np.pi * d * g / (nl * nv) * f


def torrance_sparrow_many(N, L, V, params: SkinReflectance = SkinReflectance()) -> np.ndarray:
    """Vectorised BRDF over (..., 3) arrays; zero where N.L <= 0 or N.V <= 0."""
    N, L, V = np.broadcast_arrays(np.asarray(N, float), np.asarray(L, float), np.asarray(V, float))
    nl, nv = _dot(N, L), _dot(N, V)
    ok = (nl > 0) & (nv > 0)
    out = np.zeros(nl.shape)
    if not np.any(ok):
        return out
    n, l, v = N[ok], L[ok], V[ok]
    s = l + v
    h = s / np.linalg.norm(s, axis=-1, keepdims=True)
    nh = np.minimum(_dot(n, h), 1.0)
    vh = np.minimum(_dot(v, h), 1.0)
    g = np.minimum(1.0, np.minimum(2.0 * nh * nv[ok] / vh, 2.0 * nh * nl[ok] / vh))
    out[ok] = (
        params.rho_s / np.pi * beckmann_d(nh, params.m) * g / (nl[ok] * nv[ok]) * fresnel(vh, params.refraction_index)
    )
    return out
