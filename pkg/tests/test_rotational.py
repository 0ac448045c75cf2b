import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import cumulative_simpson

from cmcforge.spaceform import Ambient, E4, inner
from cmcforge.sinh_system import SeedParams
from cmcforge.frame import integrate_frame
from cmcforge.rotational import (
    RegimeError, profile_roots, integrate_profile, find_stilde, hat_p, ybar_identity_residual,
    contact_angle, arclength_map, tilde_u, check_phi_exceeds, matched_delta, quartic_h,
    c_from_r3,
)

# (eps, H, delta) with delta > 0 in the compact-type regimes
REGIMES = [(1, 0.0, 0.3), (1, 1.0, 0.2), (1, 0.5, 0.6), (-1, 1.5, 0.570892), (-1, 1.5, 0.3),
           (-1, 2.0, 1.0)]


def _tor(H):
    mu = np.sqrt(H * H + 1)
    return (H + mu) / 2, mu


@pytest.fixture(scope="module")
def profiles():
    return {r: integrate_profile(r[1], r[2], r[0], s_max=12.0) for r in REGIMES}


# ---------------------------------------------------------------- roots

@pytest.mark.parametrize("H", [0.2, 1.0, 2.5])
def test_root_at_one_when_delta_equals_H(H):
    assert profile_roots(H, H, 1)[1] == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("H", [0.0, 0.4, 1.7])
def test_torus_double_root(H):
    d, mu = _tor(H)
    xm, xM = profile_roots(H, d, 1)
    assert xm == pytest.approx(np.sqrt((mu + H) / (2 * mu)), abs=1e-7)
    assert xM == pytest.approx(np.sqrt((mu + H) / (2 * mu)), abs=1e-7)


def test_hyperbolic_minimal_root():
    xm, xM = profile_roots(0.0, 1.0, -1)
    assert xm**2 == pytest.approx((np.sqrt(5) - 1) / 2, abs=1e-15)
    assert xM == np.inf


@pytest.mark.parametrize("args", [(1.5, -0.5, -1), (0.0, 0.0, 1), (0.0, 0.9, 1)])
def test_root_regime_violations(args):
    with pytest.raises(RegimeError):
        profile_roots(*args)


@pytest.mark.parametrize("r", REGIMES, ids=str)
def test_roots_are_zeros_of_h(r):
    eps, H, d = r
    xm, xM = profile_roots(H, d, eps)
    assert abs(quartic_h(xm, H, d, eps)) <= 1e-13
    if np.isfinite(xM):
        assert abs(quartic_h(xM, H, d, eps)) <= 1e-13


# ---------------------------------------------------------------- profile

@pytest.mark.parametrize("H", [0.0, 0.6])
def test_torus_profile_closed_form(H):
    d, mu = _tor(H)
    prof = integrate_profile(H, d, 1, s_max=5.0)
    s = np.linspace(-5, 5, 101)
    x, xp, x3, x4, _, _ = prof.coords(s)
    assert np.allclose(x, np.sqrt((mu + H) / (2 * mu)), atol=1e-15)
    ref = np.sqrt((mu - H) / (2 * mu)) * np.sin(np.sqrt(2 * mu * (mu + H)) * s)
    assert np.max(np.abs(x3 - ref)) <= 1e-12


def test_clifford_profile():
    prof = integrate_profile(0.0, 0.5, 1, s_max=3.0)
    assert prof.torus and prof.x_m == pytest.approx(1 / np.sqrt(2), abs=1e-7)


@pytest.mark.parametrize("r", REGIMES, ids=str)
def test_profile_invariants(profiles, r):
    prof = profiles[r]
    s = np.linspace(-prof.s_max, prof.s_max, 801)
    assert np.max(np.abs(prof.first_order_residual(s))) <= 1e-9
    x0, xp0, ph0 = prof.state(0.0)[:, 0]
    assert x0 == prof.x_m and xp0 == 0 and ph0 == 0
    a, b = prof.state(s), prof.state(-s)
    assert np.max(np.abs(a[0] - b[0])) <= 1e-10
    assert np.max(np.abs(a[2] + b[2])) <= 1e-10
    P = prof.embedding(s[:, None], np.linspace(0, 2 * np.pi, 9)[None, :])
    assert np.max(np.abs(inner(P, P, prof.epsilon) - prof.epsilon)) <= 1e-12


def test_principal_curvatures_against_finite_differences():
    eps, H, d = -1, 1.5, 0.570892
    prof = integrate_profile(H, d, eps, s_max=2.0)
    s0 = np.linspace(-1.5, 1.5, 7)
    psi, _, _, n = prof.frame(s0)
    k_s, k_t = prof.principal_curvatures(s0)
    errs = []
    for h in (4e-3, 2e-3, 1e-3):
        pss = (prof.embedding(s0 + h, 0.0) - 2 * psi + prof.embedding(s0 - h, 0.0)) / h**2
        ptt = (prof.embedding(s0, h) - 2 * psi + prof.embedding(s0, -h)) / h**2
        x = prof.state(s0)[0]
        fd_s = inner(pss, n, eps)
        fd_t = inner(ptt, n, eps) / x**2
        # the normal orientation is fixed up to a global sign
        sg = np.sign(fd_s[0] * k_s[0])
        errs.append(max(np.max(np.abs(sg * fd_s - k_s)), np.max(np.abs(sg * fd_t - k_t))))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.8), (errs, rates)


# ---------------------------------------------------------------- free boundary root

@pytest.mark.parametrize("H", [0.0, 0.5, 1.3])
def test_stilde_torus_limit(H):
    d, mu = _tor(H)
    fb = find_stilde(integrate_profile(H, d, 1, s_max=5.0))
    assert fb.s_tilde == pytest.approx(np.pi / (2 * np.sqrt(2 * mu * (H + mu))), abs=1e-10)


def test_stilde_clifford_value():
    fb = find_stilde(integrate_profile(0.0, 0.5, 1, s_max=5.0))
    assert fb.s_tilde == pytest.approx(np.pi / (2 * np.sqrt(2)), abs=1e-12)
    assert fb.s_tilde == pytest.approx(1.110721, abs=1e-6)


@pytest.mark.parametrize("r", REGIMES, ids=str)
def test_free_boundary_data(profiles, r):
    prof = profiles[r]
    fb = find_stilde(prof)
    st_ = fb.s_tilde
    assert prof.F(st_ / 2)[0] < 0 and prof.F(st_ + 0.01)[0] > 0
    assert np.all(prof.F(np.linspace(1e-3, st_, 200)[:-1]) < 0)
    assert abs(fb.F_at_root) <= 1e-12 and fb.F_slope > 0
    x4 = prof.coords(np.array([st_]))[3][0]
    assert x4 > 0
    # containment: <psi, e4> = x4(s) >= x4(s~) (eps = 1) or the mirrored bound
    s = np.linspace(-st_, st_, 401)
    P = prof.embedding(s[:, None], np.linspace(0, 2 * np.pi, 17)[None, :])
    assert np.all(fb.ball.contains(P, tol=1e-12))
    # eps x4 non-increasing on [0, s~]
    e4 = prof.epsilon * prof.coords(s[200:])[3]
    assert np.all(np.diff(e4) <= 1e-14)
    # orthogonal contact along the boundary circle
    assert abs(contact_angle(prof, fb)[0] - np.pi / 2) <= 1e-7


def test_stilde_needs_positive_delta():
    with pytest.raises(RegimeError):
        find_stilde(integrate_profile(0.5, -0.1, 1, s_max=3.0))


@pytest.mark.parametrize("r", REGIMES, ids=str)
def test_axis_point(profiles, r):
    prof = profiles[r]
    fb = find_stilde(prof)
    s = fb.s_tilde + np.linspace(-1e-3, 1e-3, 5)
    p = hat_p(prof, s)
    assert abs(hat_p(prof, fb.s_tilde)[0, 2]) <= 1e-10
    assert np.all(np.diff(p[:, 2]) > 0)
    assert np.max(np.abs(ybar_identity_residual(prof, s))) <= 1e-10
    assert np.max(np.abs(inner(p, p, prof.epsilon) - prof.epsilon)) <= 1e-12


# ---------------------------------------------------------------- arclength map

def test_arclength_at_c_one():
    amb = Ambient(1, 0.7)
    am = arclength_map(1.0, amb)
    u = np.linspace(0, 5, 11)
    assert np.allclose(am.s_of_u(u), u / (2 * amb.mu), atol=0)
    assert am.s_of_u(0.0) == 0


@pytest.mark.parametrize("amb", [Ambient(1, 0.0), Ambient(-1, 1.5)], ids=str)
def test_arclength_matches_frame_profile(amb):
    sp = SeedParams(1, 2.0, 1.8)
    am = arclength_map(sp.c, amb)
    p = integrate_frame(sp, amb, 3.0, n_u=1201, n_v=3, u_min=0.0)
    speed = np.sqrt(inner(p.psi_u[:, 0], p.psi_u[:, 0], amb.epsilon))
    s_num = cumulative_simpson(speed, x=p.u, initial=0.0)
    assert np.max(np.abs(am.s_of_u(p.u) - s_num)) <= 1e-7
    assert np.all(np.diff(am.s_of_u(p.u)) > 0)
    assert am.u_of_s(float(am.s_of_u(2.0))) == pytest.approx(2.0, abs=1e-12)


# ---------------------------------------------------------------- u~(r3)

@pytest.mark.parametrize("H", [0.0, 0.8])
def test_tilde_u_at_r3_one(H):
    amb = Ambient(1, H)
    ref = np.pi / np.sqrt(2) * np.sqrt(amb.mu / (H + amb.mu))
    assert tilde_u(1.0, amb) == pytest.approx(ref, abs=1e-10)


def test_tilde_u_clifford_value_and_continuity():
    amb = Ambient(1, 0.0)
    u1 = tilde_u(1.0, amb)
    assert u1 == pytest.approx(2.221441, abs=1e-6)
    # u~ is smooth in c, and c - 1 ~ sqrt(r3 - 1): the gap shrinks like sqrt(r3 - 1)
    gaps, dc = [], []
    for k in (3, 5, 7, 9):
        u, det = tilde_u(1.0 + 10.0**-k, amb, return_details=True)
        gaps.append(abs(u - u1))
        dc.append(det["c"] - 1)
    ratios = np.array(gaps) / np.array(dc)
    assert np.ptp(ratios) <= 0.05 * ratios[-1]
    assert gaps[-1] <= 1e-4


def test_matched_delta_neck_curvature():
    amb = Ambient(-1, 1.5)
    for c in (2.0, 3.0, 4.0):
        d = matched_delta(c, amb)
        xm = profile_roots(amb.H, d, -1)[0]
        assert amb.H - d / xm**2 == pytest.approx(amb.H - amb.mu * c * c, abs=1e-10)
        assert c_from_r3(SeedParams(1, 2, c).r3) == pytest.approx(c, abs=1e-12)
    with pytest.raises(RegimeError):
        matched_delta(1.3, amb)


# ---------------------------------------------------------------- phi at the first maximum

def test_phi_exceeds_example():
    assert check_phi_exceeds(integrate_profile(0.0, 0.4, 1, s_max=10.0))


def test_phi_exceeds_torus_limit():
    d, _ = _tor(0.3)
    assert check_phi_exceeds(integrate_profile(0.3, d, 1, s_max=3.0))


def test_phi_exceeds_regime_guard():
    with pytest.raises(RegimeError):
        check_phi_exceeds(integrate_profile(1.0, 0.2, 1, s_max=3.0))


def test_phi_exceeds_grid():
    for H in np.linspace(0.0, 2.0, 10):
        d_top, _ = _tor(H)
        for d in np.linspace(H, d_top, 12)[1:-1]:
            assert check_phi_exceeds(integrate_profile(H, d, 1, s_max=12.0)), (H, d)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(0.05, 0.95))
def test_stilde_exists_in_sphere_regime(H, t):
    d_top, _ = _tor(H)
    d = t * d_top
    fb = find_stilde(integrate_profile(H, d, 1, s_max=12.0))
    assert fb.s_tilde > 0 and fb.F_slope > 0
