import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from glintcheck.brdf import (
    SkinReflectance,
    beckmann_d,
    fresnel,
    geometric_attenuation,
    halfway,
    torrance_sparrow,
    torrance_sparrow_many,
)
from glintcheck.errors import BackFacing, DegenerateHalfway, OutOfDomain
from glintcheck.geometry import normalize, rotvec_to_matrix

Z = np.array([0.0, 0.0, 1.0])


def test_halfway_examples():
    np.testing.assert_allclose(halfway(Z, Z), Z)
    s = 1 / math.sqrt(2)
    np.testing.assert_allclose(halfway([1, 0, 0], [0, 1, 0]), [s, s, 0])
    with pytest.raises(DegenerateHalfway):
        halfway(Z, -Z)


def test_beckmann_examples():
    assert beckmann_d(1.0, 0.266) == pytest.approx(14.1331, abs=1e-3)
    assert beckmann_d(1.0, 0.266) == pytest.approx(1 / 0.266**2, rel=1e-15)
    c = math.cos(math.atan(0.266))
    assert beckmann_d(c, 0.266) == pytest.approx(math.exp(-1) / (0.266**2 * c**4), rel=1e-12)
    assert beckmann_d(c, 0.266) == pytest.approx(5.961, abs=1e-3)
    assert beckmann_d(0.01, 0.266) < 1e-300
    for bad in (0.0, -0.5, 1.0001):
        with pytest.raises(OutOfDomain):
            beckmann_d(bad, 0.266)


def test_beckmann_projected_integral():
    # This form carries no 1/pi, so its projected-solid-angle integral is pi.
    rng = np.random.default_rng(0)
    n = 10**6
    cos_t = rng.uniform(0.0, 1.0, n)  # uniform over the hemisphere: pdf 1 / (2 pi)
    cos_t = cos_t[cos_t > 0]
    vals = beckmann_d(cos_t, 0.266) * cos_t * 2 * np.pi
    assert vals.mean() == pytest.approx(np.pi, rel=0.02)


def test_geometric_attenuation_examples():
    assert geometric_attenuation(Z, Z, Z, Z) == 1.0
    # L = V at 60 degrees: H = L, so the middle term is 2 * 0.5 * 0.5 / 1
    L = np.array([math.sin(math.radians(60)), 0.0, 0.5])
    assert geometric_attenuation(Z, halfway(L, L), L, L) == pytest.approx(0.5)
    Lg = np.array([math.sqrt(1 - 0.01**2), 0.0, 0.01])
    assert geometric_attenuation(Z, Z, Z, Lg) == pytest.approx(0.02)
    with pytest.raises(OutOfDomain):
        geometric_attenuation(Z, Z, -Z, Z)


def test_fresnel_examples():
    assert fresnel(1.0, 1.38) == pytest.approx((0.38 / 2.38) ** 2, abs=1e-15)
    assert fresnel(1.0, 1.38) == pytest.approx(0.025492, abs=1e-6)
    assert fresnel(1e-9, 1.38) == pytest.approx(1.0, abs=1e-6)
    f45 = fresnel(math.cos(math.radians(45)), 1.38)
    assert 0.0255 < f45 < 1 and f45 > fresnel(1.0, 1.38)
    with pytest.raises(OutOfDomain):
        fresnel(0.0, 1.38)
    with pytest.raises(OutOfDomain):
        fresnel(0.5, 1.0)


def test_fresnel_monotone():
    c = np.linspace(1e-6, 1.0, 2001)
    f = fresnel(c, 1.38)
    assert np.all(np.diff(f) <= 0)


def test_torrance_sparrow_normal_incidence():
    expected = 0.497 / math.pi * 14.1331 * 0.025492
    assert torrance_sparrow(Z, Z, Z) == pytest.approx(0.05699, abs=1e-5)
    assert torrance_sparrow(Z, Z, Z) == pytest.approx(expected, rel=1e-4)


def test_torrance_sparrow_back_facing():
    with pytest.raises(BackFacing):
        torrance_sparrow(Z, -Z, Z)
    with pytest.raises(BackFacing):
        torrance_sparrow(Z, Z, normalize([1, 0, -0.1]))


def test_mirror_direction_maximises_facet_term():
    # D peaks exactly at the mirror direction; the full model's 1 / (N.L N.V)
    # and Fresnel factors push the overall peak further toward grazing.
    scan = np.radians(np.arange(-89, 90, 1.0))
    for tilt in (0.1, 0.3, 0.5):
        L = normalize([math.sin(tilt), 0.0, math.cos(tilt)])
        views = [np.array([math.sin(a), 0.0, math.cos(a)]) for a in scan]
        d = [beckmann_d(min(halfway(L, v) @ Z, 1.0), 0.266) for v in views]
        f = [torrance_sparrow(Z, L, v) for v in views]
        assert math.isclose(scan[int(np.argmax(d))], -tilt, abs_tol=math.radians(0.5))
        assert scan[int(np.argmax(f))] <= -tilt + math.radians(0.5)


def test_linear_in_rho_s():
    N, L, V = Z, normalize([0.2, 0.1, 1]), normalize([-0.3, 0.0, 1])
    a = torrance_sparrow(N, L, V, SkinReflectance(rho_s=0.3))
    b = torrance_sparrow(N, L, V, SkinReflectance(rho_s=0.6))
    assert b == 2 * a


def test_params_validation():
    for kw in ({"rho_s": 0}, {"m": 0}, {"m": 1}, {"refraction_index": 1.0}):
        with pytest.raises(ValueError):
            SkinReflectance(**kw)


def _hemi(theta, phi):
    return np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])


angle = st.floats(0.0, math.acos(0.011))
turn = st.floats(0.0, 2 * math.pi)


@given(angle, turn, angle, turn, st.tuples(*[st.floats(-3, 3)] * 3))
def test_reciprocity_and_non_negative(tl, pl, tv, pv, rv):
    R = rotvec_to_matrix(rv)
    N, L, V = R @ Z, R @ _hemi(tl, pl), R @ _hemi(tv, pv)
    assume(N @ L > 0.01 and N @ V > 0.01 and np.linalg.norm(L + V) > 1e-6)
    a, b = torrance_sparrow(N, L, V), torrance_sparrow(N, V, L)
    assert a >= 0
    assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


def test_vectorised_matches_scalar():
    rng = np.random.default_rng(1)
    N = np.tile(Z, (500, 1))
    L = normalize_many(rng.normal(size=(500, 3)) + [0, 0, 2])
    V = normalize_many(rng.normal(size=(500, 3)) + [0, 0, 2])
    many = torrance_sparrow_many(N, L, V)
    for i in range(500):
        if N[i] @ L[i] > 0 and N[i] @ V[i] > 0:
            assert many[i] == pytest.approx(torrance_sparrow(N[i], L[i], V[i]), rel=1e-12)
        else:
            assert many[i] == 0.0


def normalize_many(v):
    return v / np.linalg.norm(v, axis=1, keepdims=True)
