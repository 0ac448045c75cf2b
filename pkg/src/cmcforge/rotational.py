"""Rotational CMC surfaces in S^3 and H^3 and their free boundary pieces.

Profiles are parametrised by arclength s with x(s) the distance-type
coordinate to the rotation axis {x1 = x2 = 0} and phi(s) the angle (or
hyperbolic angle) along the axis:

    S^3: (x cos t, -x sin t, sqrt(1-x^2) sin phi, sqrt(1-x^2) cos phi)
    H^3: (x cos t, -x sin t, sqrt(1+x^2) sinh phi, sqrt(1+x^2) cosh phi)
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .spaceform import Ambient, E4, GeodesicBall, inner, inverse_totally_geodesic_projection

SCAN_STEP = 1e-2


class RegimeError(ValueError):
    """(H, delta, eps) outside the regimes where the profile is a compact-type curve."""


def _eps(amb_or_eps):
    return amb_or_eps.epsilon if isinstance(amb_or_eps, Ambient) else int(amb_or_eps)


def quartic_h(x, H, delta, eps):
    return x**2 - eps * x**4 - (H * x**2 - delta) ** 2


def profile_roots(H, delta, amb):
    """Positive roots x_m <= x_M of h; x_M = inf when the profile is unbounded."""
    eps = _eps(amb)
    if delta == 0:
        raise RegimeError("delta must be non-zero")
    mu2 = H * H + eps
    lin = 1.0 + 2.0 * H * delta
    if mu2 > 0:
        if eps == 1:
            mu = np.sqrt(mu2)
            if not ((H - mu) / 2 - 1e-15 <= delta <= (H + mu) / 2 + 1e-15):
                raise RegimeError(f"delta={delta} outside [{(H - mu) / 2}, {(H + mu) / 2}]")
        disc = lin * lin - 4.0 * mu2 * delta * delta
        if disc < 0:
            if disc > -1e-13:
                disc = 0.0
            else:
                raise RegimeError(f"no positive roots for H={H}, delta={delta}, eps={eps}")
        if lin <= 0:
            raise RegimeError("profile roots are not positive")
        sq = np.sqrt(disc)
        wm = (lin - sq) / (2.0 * mu2)
        wM = (lin + sq) / (2.0 * mu2)
        # the smaller root in stable form
        wm = delta * delta / (mu2 * wM) if wM > 0 else wm
        return float(np.sqrt(wm)), float(np.sqrt(wM))
    kap = -mu2
    if kap == 0:
        if lin <= 0:
            raise RegimeError("no positive root")
        return float(np.sqrt(delta * delta / lin)), float("inf")
    wm = 2.0 * delta * delta / (lin + np.sqrt(lin * lin + 4.0 * kap * delta * delta))
    return float(np.sqrt(wm)), float("inf")


def matched_delta(c, amb: Ambient) -> float:
    """delta whose neck has v-line curvature H - mu c^2 (the rotational seed (1, b, c)).

    Matching H - delta/x_m^2 = H - mu c^2 with h(x_m) = 0 gives
    delta = 1/(mu (c^2 + c^-2) - 2H), and then x_m^2 = delta/(mu c^2).
    """
    den = amb.mu * (c * c + 1.0 / (c * c)) - 2.0 * amb.H
    if den <= 0:
        raise RegimeError(f"no rotational match for c={c}")
    return float(1.0 / den)


def c_from_r3(r3):
    if r3 < 1:
        raise ValueError("r3 must be >= 1")
    return float(np.sqrt(r3) + np.sqrt(r3 - 1.0))


def is_torus_limit(H, delta, eps):
    return eps == 1 and abs(delta - (H + np.sqrt(H * H + 1)) / 2) <= 1e-14


@dataclass
class DelaunayProfile:
    H: float
    delta: float
    epsilon: int
    x_m: float
    x_M: float
    s_max: float
    sol_pos: object = field(repr=False, default=None)
    sol_neg: object = field(repr=False, default=None)
    torus: bool = False

    @property
    def mu2(self):
        return self.H**2 + self.epsilon

    def state(self, s):
        """(x, x', phi) at s in [-s_max, s_max]."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if np.any(np.abs(s) > self.s_max * (1 + 1e-12)):
            raise ValueError("s outside the integrated range")
        if self.torus:
            mu = np.sqrt(self.mu2)
            k = np.sqrt(2.0 * mu * (mu + self.H))
            x = np.full_like(s, np.sqrt((mu + self.H) / (2.0 * mu)))
            return np.stack([x, np.zeros_like(s), k * s])
        out = np.empty((3, len(s)))
        pos = s >= 0
        if np.any(pos):
            out[:, pos] = self.sol_pos(s[pos])
        if np.any(~pos):
            out[:, ~pos] = self.sol_neg(s[~pos])
        return out

    def phi_prime(self, x):
        H, d, eps = self.H, self.delta, self.epsilon
        if eps == 1:
            return H / x + (d - H) / (x * (1.0 - x * x))
        return (d - H * x * x) / (x * (1.0 + x * x))

    def coords(self, s):
        """x1 = x, x3, x4 and their s-derivatives on the meridian theta = 0."""
        x, xp, ph = self.state(s)
        eps = self.epsilon
        R = np.sqrt(1.0 - eps * x * x)
        Rp = -eps * x * xp / R
        php = self.phi_prime(x)
        if eps == 1:
            S, C = np.sin(ph), np.cos(ph)
        else:
            S, C = np.sinh(ph), np.cosh(ph)
        x3, x4 = R * S, R * C
        x3p = Rp * S + R * C * php
        x4p = Rp * C - eps * R * S * php
        return x, xp, x3, x4, x3p, x4p

    def F(self, s):
        x, xp, x3, _, x3p, _ = self.coords(s)
        return x3 * xp - x3p * x

    def embedding(self, s, t):
        """psi(s, t) with broadcasting: returns (..., 4)."""
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        x, _, x3, x4, _, _ = self.coords(s.ravel())
        shape = np.broadcast(s, t).shape
        x = np.broadcast_to(x.reshape(s.shape), shape)
        x3 = np.broadcast_to(x3.reshape(s.shape), shape)
        x4 = np.broadcast_to(x4.reshape(s.shape), shape)
        return np.stack([x * np.cos(t), -x * np.sin(t), x3, x4], axis=-1)

    def frame(self, s):
        """psi, psi_s, unit psi_t direction and unit normal on the meridian t = 0."""
        x, xp, x3, x4, x3p, x4p = self.coords(s)
        z = np.zeros_like(x)
        psi = np.stack([x, z, x3, x4], axis=-1)
        ps = np.stack([xp, z, x3p, x4p], axis=-1)
        pt = np.stack([z, -np.ones_like(x), z, z], axis=-1)
        eps = self.epsilon
        # normal: orthogonal to psi and psi_s inside span{e1, e3, e4}
        G = np.array([1.0, 1.0, float(eps)])
        a = np.stack([psi[:, 0], psi[:, 2], psi[:, 3]], axis=-1) * G
        b = np.stack([ps[:, 0], ps[:, 2], ps[:, 3]], axis=-1) * G
        n3 = np.cross(a, b)
        n = np.stack([n3[:, 0], z, n3[:, 1], n3[:, 2]], axis=-1)
        nn = inner(n, n, eps)
        n = n / np.sqrt(nn)[:, None]
        # orient so that the mean curvature of the profile has the sign of H
        return psi, ps, pt, n

    def principal_curvatures(self, s):
        x = self.state(s)[0]
        return self.H + self.delta / x**2, self.H - self.delta / x**2

    def first_order_residual(self, s):
        x, xp, _ = self.state(s)
        return xp**2 - quartic_h(x, self.H, self.delta, self.epsilon) / x**2

    def first_maximum(self):
        """First s > 0 where x reaches x_M (x' = 0 from above)."""
        if self.torus or not np.isfinite(self.x_M):
            raise RegimeError("profile has no interior maximum")
        f = lambda s: self.state(s)[1]
        from .sinh_system import first_root
        r = first_root(f, 1e-9, self.s_max, step=SCAN_STEP)
        if r is None:
            raise RuntimeError("extend s_max to reach the first maximum")
        return r


def integrate_profile(H, delta, amb, s_max, tol=1e-13) -> DelaunayProfile:
    eps = _eps(amb)
    x_m, x_M = profile_roots(H, delta, eps)
    if is_torus_limit(H, delta, eps):
        return DelaunayProfile(H, delta, eps, x_m, x_M, float(s_max), torus=True)
    mu2 = H * H + eps
    prof = DelaunayProfile(H, delta, eps, x_m, x_M, float(s_max))

    def rhs(_, w):
        x, xp, _ = w
        return np.array([xp, -mu2 * x + delta * delta / x**3, prof.phi_prime(x)])

    w0 = np.array([x_m, 0.0, 0.0])
    kw = dict(method="DOP853", rtol=tol, atol=tol * 1e-2, dense_output=True)
    pos = solve_ivp(rhs, (0.0, s_max), w0, **kw)
    neg = solve_ivp(rhs, (0.0, -s_max), w0, **kw)
    if not (pos.success and neg.success):
        raise RuntimeError("profile integration failed")
    prof.sol_pos, prof.sol_neg = pos.sol, neg.sol
    return prof


# ---------------------------------------------------------------- free boundary root

@dataclass
class FreeBoundaryData:
    s_tilde: float
    ball: GeodesicBall
    F_at_root: float
    F_slope: float
    profile: DelaunayProfile = field(repr=False)

    def p_hat(self, s):
        return hat_p(self.profile, s)


def find_stilde(profile: DelaunayProfile, s_cap=None) -> FreeBoundaryData:
    """First positive root of F = x3 x' - x3' x, with F < 0 before it."""
    if profile.delta <= 0:
        raise RegimeError("free boundary pieces need delta > 0")
    from .sinh_system import first_root
    hi = profile.s_max if s_cap is None else min(s_cap, profile.s_max)
    Fs = lambda s: profile.F(s)
    r = first_root(Fs, 1e-9, hi, step=SCAN_STEP, xtol=1e-15)
    if r is None:
        raise RuntimeError("F has no sign change; increase s_max")
    h = 1e-6
    slope = float((Fs(r + h)[0] - Fs(r - h)[0]) / (2 * h))
    x4 = float(profile.coords(np.array([r]))[3][0])
    eps = profile.epsilon
    ball = GeodesicBall(E4.copy(), eps * x4, eps)
    return FreeBoundaryData(float(r), ball, float(Fs(r)[0]), slope, profile)


def hat_p(profile: DelaunayProfile, s):
    """Axis point of the geodesic tangent to the profile at s."""
    x, xp, x3, x4, x3p, x4p = profile.coords(np.atleast_1d(s))
    den = xp * x4 - x * x4p
    if np.any(den <= 0) or np.any(x4 <= 0):
        raise ValueError("hat_p is defined only where x' x4 - x x4' > 0 and x4 > 0")
    ybar = x3 / x4 - x * (x3p * x4 - x3 * x4p) / (x4 * den)
    q = np.stack([np.zeros_like(ybar), ybar], axis=-1)
    return inverse_totally_geodesic_projection(q, profile.epsilon)


def ybar_identity_residual(profile: DelaunayProfile, s):
    x, xp, x3, x4, x3p, x4p = profile.coords(np.atleast_1d(s))
    den = xp * x4 - x * x4p
    ybar = x3 / x4 - x * (x3p * x4 - x3 * x4p) / (x4 * den)
    return ybar * den - (x3 * xp - x * x3p)


def contact_angle(profile: DelaunayProfile, fb: FreeBoundaryData, s=None):
    """Angle between the surface and the ball's boundary sphere at s (default s~)."""
    s = fb.s_tilde if s is None else s
    eps = profile.epsilon
    psi, ps, pt, n = profile.frame(np.atleast_1d(s))
    d = fb.ball.d
    nhat = fb.ball.center - eps * d * psi
    nn = np.sqrt(inner(nhat, nhat, eps))
    return np.arccos(np.clip(inner(n, nhat, eps) / nn, -1.0, 1.0))


# ---------------------------------------------------------------- arclength map u <-> s

@dataclass
class ArclengthMap:
    c: float
    mu: float
    u_max: float
    sol: object = field(repr=False, default=None)

    def s_of_u(self, u):
        u = np.asarray(u, dtype=float)
        if self.sol is None:
            return u / (2.0 * self.mu)
        au = np.abs(u)
        return np.sign(u) * self.sol(au)[2]

    def rho(self, u):
        if self.sol is None:
            return np.zeros_like(np.asarray(u, dtype=float))
        return self.sol(np.abs(np.asarray(u, dtype=float)))[0]

    def u_of_s(self, s):
        if self.sol is None:
            return 2.0 * self.mu * s
        return float(brentq(lambda u: self.s_of_u(u) - s, 0.0, self.u_max, xtol=1e-15,
                            rtol=1e-15))


def arclength_map(c, amb: Ambient, u_max=20.0, tol=1e-13) -> ArclengthMap:
    """s(u) for the rotational seed (1, b, c): rho'' = -cosh rho sinh rho, s' = e^rho/(2 mu).

    rho(u) on the v = 0 line does not depend on b.
    """
    if c == 1.0:
        return ArclengthMap(1.0, amb.mu, u_max)
    mu = amb.mu

    def rhs(_, w):
        r, rp, _ = w
        return np.array([rp, -np.cosh(r) * np.sinh(r), np.exp(r) / (2.0 * mu)])

    sol = solve_ivp(rhs, (0.0, u_max), np.array([-np.log(c), 0.0, 0.0]), method="DOP853",
                    rtol=tol, atol=tol * 1e-2, dense_output=True)
    return ArclengthMap(float(c), mu, float(u_max), sol.sol)


def arclength_from_samples(u, rho, amb: Ambient):
    """Cumulative trapezoid-free Simpson quadrature of e^rho/(2 mu)."""
    from scipy.integrate import cumulative_simpson
    return cumulative_simpson(np.exp(rho) / (2.0 * amb.mu), x=u, initial=0.0)


def _profile_span(H, delta, eps):
    x_m, x_M = profile_roots(H, delta, eps)
    # generous arclength budget: a couple of x-oscillations or escape to large x
    return 12.0


def tilde_u(r3, amb: Ambient, return_details=False):
    """u at which the rotational seed with this r3 meets its ball orthogonally."""
    mu, H = amb.mu, amb.H
    c = c_from_r3(r3)
    if r3 == 1.0 and amb.epsilon == 1:
        delta = (H + mu) / 2.0
    else:
        delta = matched_delta(c, amb)
    prof = integrate_profile(H, delta, amb, s_max=_profile_span(H, delta, amb.epsilon))
    if prof.torus:
        s_t = np.pi / (2.0 * np.sqrt(2.0 * mu * (H + mu)))
        fb = None
    else:
        fb = find_stilde(prof)
        s_t = fb.s_tilde
    am = arclength_map(c, amb, u_max=max(20.0, 8.0 * mu * s_t))
    u = am.u_of_s(s_t)
    if return_details:
        return u, dict(c=c, delta=delta, s_tilde=s_t, profile=prof, fb=fb, arclength=am)
    return u


def check_phi_exceeds(profile: DelaunayProfile) -> bool:
    """phi at the first x-maximum exceeds pi/2 (eps = +1, delta > H)."""
    if profile.epsilon != 1 or not profile.delta > profile.H:
        raise RegimeError("check applies to eps = +1 with delta > H")
    if profile.torus:
        # limit of nearby profiles: x oscillates with linearised frequency 2 mu,
        # so the first maximum sits at pi/(2 mu); phi grows at rate k
        mu = np.sqrt(profile.H**2 + 1)
        k = np.sqrt(2.0 * mu * (mu + profile.H))
        return bool(k * np.pi / (2.0 * mu) > np.pi / 2)
    s2 = profile.first_maximum()
    return bool(profile.state(s2)[2][0] > np.pi / 2)
