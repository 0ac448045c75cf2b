"""Period map: turning of the stereographic image of the central v-line.

For a = 1 the map has a closed form; for a > 1 it is evaluated by
integrating the frame along u = 0 after rebasing, so that the symmetry
axis of the center plane sits at {x1 = x2 = 0}.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq

from .frame import central_line, rebasing_isometry, symmetry_planes
from .sinh_system import SeedParams, SeedDomainError, sigma
from .spaceform import Ambient, stereographic, stereographic_differential


@dataclass
class PeriodEvaluation:
    theta: float
    v: np.ndarray
    gamma: np.ndarray        # (n, 2) planar curve
    integrand: np.ndarray    # kappa * |gamma'|
    theta_turning: float     # from the unwrapped tangent angle
    theta_coarse: float      # same quadrature on every other node
    certified: bool          # False outside the O^- region
    planarity: float         # max |x3| of the projected curve


def _curve_derivatives(line, amb: Ambient):
    """gamma, gamma', gamma'' from the frame along u = 0 (rho_u = 0 there)."""
    H, mu, eps = amb.H, amb.mu, amb.epsilon
    psi, pv, N = line["psi"], line["psi_v"], line["N"]
    rho, rv = line["rho"], line["rho_v"]
    e2 = np.exp(2.0 * rho)[:, None]
    m2 = 4.0 * mu * mu
    pvv = rv[:, None] * pv + (H * e2 - mu) / m2 * N - eps * e2 / m2 * psi
    s = (1.0 + psi[:, 3])[:, None]
    xb, xbv, xbvv = psi[:, :3], pv[:, :3], pvv[:, :3]
    x4v, x4vv = pv[:, 3:4], pvv[:, 3:4]
    g = stereographic(psi, eps)
    g1 = stereographic_differential(psi, pv)
    g2 = (xbvv / s - 2.0 * xbv * x4v / s**2 - xb * x4vv / s**2 + 2.0 * xb * x4v**2 / s**3)
    return g, g1, g2


def theta_from_line(line, v, amb: Ambient, certified=True) -> PeriodEvaluation:
    g, g1, g2 = _curve_derivatives(line, amb)
    planarity = float(np.max(np.abs(g[:, 2])))
    x1, y1 = g1[:, 0], g1[:, 1]
    integrand = (x1 * g2[:, 1] - y1 * g2[:, 0]) / (x1 * x1 + y1 * y1)
    th = simpson(integrand, x=v) / np.pi
    th2 = simpson(integrand[::2], x=v[::2]) / np.pi
    ang = np.unwrap(np.arctan2(y1, x1))
    th_turn = (ang[-1] - ang[0]) / np.pi
    return PeriodEvaluation(float(th), v, g[:, :2], integrand, float(th_turn), float(th2),
                            certified, planarity)


def theta_numeric(sp: SeedParams, amb: Ambient, n=2049, tol=1e-12, check=True) -> PeriodEvaluation:
    """Period map by quadrature of the turning integrand over one half-period."""
    if n % 2 == 0:
        n += 1
    sg = sigma(sp)
    sym = symmetry_planes(sp, amb, sg, k_max=1, tol=tol)
    L = rebasing_isometry(sp, amb)
    v = np.linspace(0.0, sg, n)
    line = central_line(sp, amb, v, tol=tol, L=L)
    ev = theta_from_line(line, v, amb, certified=sym.in_O_minus)
    if check and abs(ev.theta - ev.theta_coarse) > 1e-6:
        raise RuntimeError(f"period quadrature unresolved: {ev.theta} vs {ev.theta_coarse}")
    return ev


def in_R_params(b, c, amb: Ambient) -> bool:
    return bool((amb.H - amb.mu * c * c) ** 2 + amb.epsilon > 0)


def theta_closed(b, c, amb: Ambient) -> float:
    H, mu, eps = amb.H, amb.mu, amb.epsilon
    num = (H - c * c * mu) ** 2 + eps
    if num <= 0:
        raise SeedDomainError(f"(1, {b}, {c}) is outside the region where the period is real")
    return float(-np.sqrt(num) / (c * mu * np.sqrt((1.0 / c + b * c) * (1.0 / c + c / b))))


def theta_squared_r(r1, r3, amb: Ambient) -> float:
    H, mu = amb.H, amb.mu
    return float((mu * (2.0 * r3 - 1.0) - H) / (2.0 * mu * (r3 - r1)))


def level_line_r3(theta0, r1, amb: Ambient) -> float:
    t2 = theta0 * theta0
    H, mu = amb.H, amb.mu
    return float(t2 / (t2 - 1.0) * r1 + (H + mu) / (2.0 * mu * (1.0 - t2)))


def p0(amb: Ambient):
    q = (amb.H + amb.mu) / (2.0 * amb.mu)
    return (q, q)


def upsilon_line(theta0, r, amb: Ambient):
    t2 = theta0 * theta0
    if not t2 < 1.0:
        raise ValueError("need theta0^2 < 1")
    H, mu = amb.H, amb.mu
    return float(-r), float(t2 / (1.0 - t2) * r + (H + mu) / (2.0 * mu * (1.0 - t2)))


def theta_value(a, b, c, amb: Ambient, tol=1e-12) -> float:
    if a == 1.0:
        return theta_closed(b, c, amb)
    return theta_numeric(SeedParams(a, b, c), amb, tol=tol).theta


def _bracket_scan(f, x0, x_min, x_max, factor=1.05, max_steps=400):
    """Multiplicative scans up and down from x0 until f changes sign."""
    f0 = f(x0)
    if f0 == 0:
        return x0, x0
    lo = hi = x0
    for _ in range(max_steps):
        moved = False
        if hi < x_max:
            nxt = min(hi * factor, x_max)
            fn = f(nxt)
            if np.sign(fn) != np.sign(f0):
                return hi, nxt
            hi, moved = nxt, True
        if lo > x_min:
            nxt = max(lo / factor, x_min)
            try:
                fn = f(nxt)
            except SeedDomainError:
                fn = np.nan
            if np.isfinite(fn) and np.sign(fn) != np.sign(f0):
                return nxt, lo
            lo, moved = nxt, True
        if not moved:
            break
    raise SeedDomainError("level set not bracketed")


def _solve_level(f, x0, x_min, x_max, xtol):
    lo, hi = _bracket_scan(f, x0, x_min, x_max)
    if lo == hi:
        return lo
    return float(brentq(f, lo, hi, xtol=xtol, rtol=1e-15, maxiter=200))


def level_c(a, b, theta0, amb: Ambient, c0=None, c_max=1e3, xtol=1e-13, tol=1e-12) -> float:
    """c with Theta(a, b, c) = theta0, found by scan plus Brent refinement."""
    def f(c):
        if a == 1.0 and not in_R_params(b, c, amb):
            raise SeedDomainError("outside R")
        return theta_value(a, b, c, amb, tol) - theta0
    if c0 is None:
        c0 = 1.0
    return _solve_level(_safe(f), c0, 1.0, c_max, xtol)


def level_b(a, c, theta0, amb: Ambient, b0=None, b_max=1e4, xtol=1e-13, tol=1e-12) -> float:
    def f(b):
        return theta_value(a, b, c, amb, tol) - theta0
    if b0 is None:
        b0 = 1.0
    return _solve_level(_safe(f), b0, 1.0, b_max, xtol)


def _safe(f):
    def g(x):
        try:
            return f(x)
        except SeedDomainError:
            return np.nan
    return g
