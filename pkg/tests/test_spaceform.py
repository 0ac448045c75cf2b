import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmcforge.rotational import find_stilde, integrate_profile
from cmcforge.spaceform import (E1, E2, E3, E4, Ambient, GeodesicBall, UmbilicSurface,
                                distance_to_geodesic, geodesic_hits_point, geodesic_point,
                                inner, inverse_stereographic, inverse_totally_geodesic_projection,
                                metric, on_manifold, stereographic, stereographic_differential,
                                totally_geodesic_projection)

eps_st = st.sampled_from([1, -1])
coord = st.floats(-2.0, 2.0, allow_nan=False)


def random_point(rng, eps):
    v = rng.normal(size=3) * 0.7
    if eps == 1:
        x = np.append(v, rng.normal())
        return x / np.linalg.norm(x)
    return np.append(v, np.sqrt(1.0 + v @ v))


def orthonormal_pair(rng, eps):
    p = random_point(rng, eps)
    t = rng.normal(size=4)
    t = t - eps * inner(t, p, eps) * p
    return p, t / np.sqrt(inner(t, t, eps))


def test_ambient_invariants():
    for eps, H in [(1, 0.0), (1, 1.0), (-1, 1.5), (-1, 3.0)]:
        a = Ambient(eps, H)
        assert a.mu**2 == pytest.approx(H * H + eps, rel=1e-14)
        assert a.Q == pytest.approx(1 / (8 * a.mu))
    with pytest.raises(ValueError):
        Ambient(-1, 1.0)
    with pytest.raises(ValueError):
        Ambient(2, 1.0)
    with pytest.raises(ValueError):
        Ambient(1, -0.5)


def test_inner_examples():
    assert inner(E4, E4, -1) == -1
    assert inner(E1, E2, 1) == 0
    assert inner([1, 2, 3, 4], [1, 1, 1, 1], -1) == 2


@given(st.lists(coord, min_size=4, max_size=4), st.lists(coord, min_size=4, max_size=4),
       st.lists(coord, min_size=4, max_size=4), st.floats(-3, 3), eps_st)
def test_inner_bilinear_symmetric(x, y, z, a, eps):
    x, y, z = map(np.array, (x, y, z))
    assert inner(x, y, eps) == pytest.approx(inner(y, x, eps))
    assert inner(a * x + z, y, eps) == pytest.approx(a * inner(x, y, eps) + inner(z, y, eps), abs=1e-9)


def test_on_manifold_examples():
    assert on_manifold(E4, Ambient(1, 0.0))
    assert on_manifold(E4, Ambient(-1, 1.5))
    assert not on_manifold(np.array([1, 0, 0, 1.0]), Ambient(1, 0.0))
    assert not on_manifold(-E4, Ambient(-1, 1.5))
    with pytest.raises(ValueError):
        on_manifold(E4, Ambient(1, 0.0), tol=0)


def test_stereographic_examples():
    assert np.allclose(stereographic(E4, 1), 0)
    assert np.allclose(stereographic(E1, 1), [1, 0, 0])
    with pytest.raises(ValueError):
        stereographic(np.array([0, 0, 0, np.sqrt(2)]), 1)
    with pytest.raises(ValueError):
        stereographic(-E4, 1)


@settings(max_examples=50)
@given(st.integers(0, 10**6), eps_st)
def test_stereographic_round_trip_and_ball(seed, eps):
    rng = np.random.default_rng(seed)
    x = random_point(rng, eps)
    if eps == 1 and x[3] < -0.9:
        x[3] = -x[3]
    p = stereographic(x, eps)
    assert np.allclose(inverse_stereographic(p, eps), x, atol=1e-10)
    if eps == -1:
        assert np.linalg.norm(p) < 1


def test_stereographic_plane_x3():
    rng = np.random.default_rng(3)
    for eps in (1, -1):
        x = random_point(rng, eps)
        x[2] = 0
        x = x / np.sqrt(abs(inner(x, x, eps)))
        if eps == -1:
            x[3] = abs(x[3])
        assert abs(stereographic(x, eps)[2]) < 1e-15


@settings(max_examples=30)
@given(st.integers(0, 10**6), eps_st)
def test_stereographic_conformal(seed, eps):
    rng = np.random.default_rng(seed)
    x = random_point(rng, eps)
    if eps == 1 and x[3] < 0:
        x = -x
    t1 = rng.normal(size=4)
    t2 = rng.normal(size=4)
    t1 -= eps * inner(t1, x, eps) * x
    t2 -= eps * inner(t2, x, eps) * x
    amb_angle = np.arccos(inner(t1, t2, eps) / np.sqrt(inner(t1, t1, eps) * inner(t2, t2, eps)))
    # finite-difference tangents of curves on the quadric
    h = 1e-6

    def curve(t, s):
        y = x + s * t
        if eps == 1:
            return y / np.linalg.norm(y)
        return np.append(y[:3], np.sqrt(1 + y[:3] @ y[:3]))

    d1 = (stereographic(curve(t1, h), eps) - stereographic(curve(t1, -h), eps)) / (2 * h)
    d2 = (stereographic(curve(t2, h), eps) - stereographic(curve(t2, -h), eps)) / (2 * h)
    ang = np.arccos(d1 @ d2 / np.linalg.norm(d1) / np.linalg.norm(d2))
    assert abs(ang - amb_angle) <= 1e-8 * 50  # central differences at h = 1e-6
    dd = stereographic_differential(x, t1)
    assert np.allclose(dd, d1, atol=1e-7)


def test_geodesic_examples():
    assert np.allclose(geodesic_point(E4, E1, np.pi / 2, 1), E1, atol=1e-15)
    for eps in (1, -1):
        assert np.allclose(geodesic_point(E4, E1, 0.0, eps), E4)
    s = 0.8
    assert np.allclose(geodesic_point(E4, E3, s, -1), [0, 0, np.sinh(s), np.cosh(s)])
    with pytest.raises(ValueError):
        geodesic_point(E4, E4, 1.0, 1)


@settings(max_examples=40)
@given(st.integers(0, 10**6), eps_st, st.floats(-5, 5))
def test_geodesic_stays_on_manifold(seed, eps, s):
    p, t = orthonormal_pair(np.random.default_rng(seed), eps)
    x = geodesic_point(p, t, s, eps)
    assert abs(inner(x, x, eps) - eps) <= 1e-12 * max(1.0, np.cosh(s) ** 2)


def test_geodesic_hits_point_examples():
    for eps in (1, -1):
        assert geodesic_hits_point(E4, E1, E4, eps)
    assert not geodesic_hits_point(E1, E2, E4, 1)


@settings(max_examples=20)
@given(st.integers(0, 10**6), eps_st)
def test_distance_to_geodesic_against_minimisation(seed, eps):
    rng = np.random.default_rng(seed)
    p, t = orthonormal_pair(rng, eps)
    q = random_point(rng, eps)
    s = np.linspace(-6, 6, 24001) if eps == -1 else np.linspace(-np.pi, np.pi, 24001)
    X = geodesic_point(p, t, s, eps)
    ip = inner(X, q, eps)
    dist = np.arccos(np.clip(ip, -1, 1)) if eps == 1 else np.arccosh(np.maximum(1, -ip))
    assert distance_to_geodesic(p, t, q, eps) == pytest.approx(dist.min(), abs=1e-6)


def test_geodesic_through_e4_for_free_boundary_nodoid():
    # eps = -1, H = 0, delta = 1: profile-level data (mu^2 < 0 is fine for the ODE)
    prof = integrate_profile(0.0, 1.0, -1, s_max=4.0)
    fb = find_stilde(prof)
    psi, ps, _, _ = prof.frame(np.array([fb.s_tilde]))
    t = ps[0] / np.sqrt(inner(ps[0], ps[0], -1))
    assert geodesic_hits_point(psi[0], t, E4, -1, tol=1e-8)
    # cross-check by direct minimisation over the geodesic
    s = np.linspace(-3, 3, 60001)
    X = geodesic_point(psi[0], t, s, -1)
    assert np.arccosh(np.maximum(1, -inner(X, E4, -1))).min() < 1e-4


def test_totally_geodesic_projection_examples():
    r = 1 / np.sqrt(2)
    assert np.allclose(totally_geodesic_projection(np.array([r, 0, 0, r])), [1, 0])
    assert np.allclose(totally_geodesic_projection(E4), [0, 0])
    assert np.allclose(totally_geodesic_projection(np.array([0, 0, np.sinh(1), np.cosh(1)])),
                       [0, np.tanh(1)])
    with pytest.raises(ValueError):
        totally_geodesic_projection(np.array([1.0, 0, 0, 0]))


@settings(max_examples=30)
@given(st.integers(0, 10**6), eps_st)
def test_projection_maps_geodesics_to_lines(seed, eps):
    rng = np.random.default_rng(seed)
    # geodesic inside {x2 = 0}
    p = random_point(rng, eps)
    p[1] = 0
    p = p / np.sqrt(abs(inner(p, p, eps)))
    p[3] = abs(p[3]) if eps == -1 else p[3]
    if p[3] <= 0.2:
        p = np.array([0, 0, 0, 1.0])
    t = rng.normal(size=4)
    t[1] = 0
    t -= eps * inner(t, p, eps) * p
    t /= np.sqrt(inner(t, t, eps))
    s = np.linspace(-0.3, 0.3, 21)
    X = geodesic_point(p, t, s, eps)
    X = X[X[:, 3] > 0.05]
    q = totally_geodesic_projection(X)
    d = q - q[0]
    cross = d[:, 0] * d[-1, 1] - d[:, 1] * d[-1, 0]
    assert np.max(np.abs(cross)) <= 1e-9 * max(1.0, np.max(np.abs(q)) ** 2)
    back = inverse_totally_geodesic_projection(q, eps)
    assert np.allclose(back, X, atol=1e-12)


def test_umbilic_normalisation():
    u = UmbilicSurface.normalized(np.array([0, 0, 0, -2.0]), -1.0, 1)
    assert np.allclose(u.m, E4) and u.d == pytest.approx(0.5)
    u = UmbilicSurface.normalized(np.array([0, -3.0, 0, 0]), 0.0, 1)
    assert np.allclose(u.m, E2)
    with pytest.raises(ValueError):
        UmbilicSurface.normalized(E4, 2.0, 1)


def test_geodesic_ball():
    b = GeodesicBall(E4, np.cos(0.5), 1)
    assert b.radius == pytest.approx(0.5)
    assert b.contains(E4) and not b.contains(E1)
    h = GeodesicBall(E4, -np.cosh(0.7), -1)
    assert h.radius == pytest.approx(0.7)
    with pytest.raises(ValueError):
        GeodesicBall(E4, 1.5, 1)
    with pytest.raises(ValueError):
        GeodesicBall(E4, -0.5, -1)
