"""Ambient geometry of the space forms S^3 (eps=+1) and H^3 (eps=-1).

Both are modelled as quadrics {<x,x> = eps} in R^4 with the inner product
dx1^2 + dx2^2 + dx3^2 + eps*dx4^2 (hyperbolic space uses the sheet x4 > 0).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

E1 = np.array([1.0, 0.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0, 0.0])
E4 = np.array([0.0, 0.0, 0.0, 1.0])


def _check_sign(eps):
    if eps not in (1, -1):
        raise ValueError(f"eps must be +1 or -1, got {eps!r}")
    return int(eps)


@dataclass(frozen=True)
class Ambient:
    """Space form sign together with the mean curvature of the surfaces sought.

    mu = sqrt(H^2 + eps) must be positive; Q = 1/(8 mu) is the Hopf
    differential normalisation used by the frame equations.
    """

    epsilon: int
    H: float

    def __post_init__(self):
        eps = _check_sign(self.epsilon)
        object.__setattr__(self, "epsilon", eps)
        H = float(self.H)
        if not np.isfinite(H) or H < 0:
            raise ValueError(f"H must be a finite non-negative number, got {self.H!r}")
        if H * H + eps <= 0:
            raise ValueError(f"H^2 + eps must be positive (H={H}, eps={eps})")
        object.__setattr__(self, "H", H)

    @property
    def mu(self) -> float:
        return float(np.sqrt(self.H**2 + self.epsilon))

    @property
    def Q(self) -> float:
        return 1.0 / (8.0 * self.mu)

    @property
    def metric(self) -> np.ndarray:
        return metric(self.epsilon)


def metric(eps) -> np.ndarray:
    return np.diag([1.0, 1.0, 1.0, float(eps)])


def inner(x, y, eps):
    """Bilinear form of signature (+,+,+,eps); broadcasts over leading axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (x[..., 0] * y[..., 0] + x[..., 1] * y[..., 1] + x[..., 2] * y[..., 2]
            + eps * x[..., 3] * y[..., 3])


def on_manifold(x, amb: Ambient, tol: float = 1e-10) -> bool:
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = np.asarray(x, dtype=float)
    ok = abs(inner(x, x, amb.epsilon) - amb.epsilon) <= tol
    if amb.epsilon == -1:
        ok = ok and x[3] > 0
    return bool(ok)


def _eps_of(amb_or_eps):
    if isinstance(amb_or_eps, Ambient):
        return amb_or_eps.epsilon
    return _check_sign(amb_or_eps)


def stereographic(x, eps, tol: float = 1e-8):
    """Projection from -e4: x -> (x1, x2, x3)/(1 + x4).

    Accepts arrays of points (..., 4). Points off the quadric or at the pole
    are rejected.
    """
    eps = _eps_of(eps)
    x = np.asarray(x, dtype=float)
    nrm = inner(x, x, eps)
    if np.any(np.abs(nrm - eps) > tol * np.maximum(1.0, np.abs(x[..., 3]) ** 2)):
        raise ValueError("point is not on the space form")
    if eps == -1 and np.any(x[..., 3] <= 0):
        raise ValueError("point lies on the lower sheet of the hyperboloid")
    den = 1.0 + x[..., 3]
    if np.any(np.abs(den) < 1e-12):
        raise ValueError("cannot project the pole -e4")
    return x[..., :3] / den[..., None]


def inverse_stereographic(p, eps):
    """Inverse of :func:`stereographic` for points (..., 3)."""
    eps = _eps_of(eps)
    p = np.asarray(p, dtype=float)
    r2 = np.sum(p * p, axis=-1)
    den = 1.0 + eps * r2
    if np.any(np.abs(den) < 1e-14):
        raise ValueError("point maps to infinity")
    x4 = (1.0 - eps * r2) / den
    xbar = 2.0 * p / den[..., None]
    return np.concatenate([xbar, x4[..., None]], axis=-1)


def stereographic_differential(x, dx):
    """Push a tangent vector dx at x through the projection from -e4."""
    x = np.asarray(x, dtype=float)
    dx = np.asarray(dx, dtype=float)
    s = 1.0 + x[..., 3]
    return dx[..., :3] / s[..., None] - x[..., :3] * (dx[..., 3] / s**2)[..., None]


def _check_orthonormal(p, t, eps, tol=1e-9):
    if (abs(inner(p, p, eps) - eps) > tol or abs(inner(t, t, eps) - 1.0) > tol
            or abs(inner(p, t, eps)) > tol):
        raise ValueError("geodesic initial data must satisfy <p,p>=eps, <t,t>=1, <p,t>=0")


def geodesic_point(p, t, s, amb):
    """Point at arclength s on the geodesic with initial point p and unit tangent t."""
    eps = _eps_of(amb)
    p = np.asarray(p, dtype=float)
    t = np.asarray(t, dtype=float)
    _check_orthonormal(p, t, eps)
    s = np.asarray(s, dtype=float)
    if eps == 1:
        c, sn = np.cos(s), np.sin(s)
    else:
        c, sn = np.cosh(s), np.sinh(s)
    return c[..., None] * p + sn[..., None] * t


def geodesic_distance(x, y, amb):
    eps = _eps_of(amb)
    ip = float(inner(x, y, eps))
    if eps == 1:
        return float(np.arccos(np.clip(ip, -1.0, 1.0)))
    return float(np.arccosh(max(1.0, -ip)))


def distance_to_geodesic(p, t, target, amb) -> float:
    """Minimum ambient distance from target to the geodesic through (p, t).

    The closest point is found in closed form from the projection of target
    onto span{p, t}.
    """
    eps = _eps_of(amb)
    p = np.asarray(p, dtype=float)
    t = np.asarray(t, dtype=float)
    _check_orthonormal(p, t, eps)
    target = np.asarray(target, dtype=float)
    al = float(inner(target, p, eps))
    be = float(inner(target, t, eps))
    # split target into its span{p, t} part and an orthogonal spacelike remainder
    r = target - eps * al * p - be * t
    rr = max(float(inner(r, r, eps)), 0.0)
    if eps == 1:
        return float(np.arctan2(np.sqrt(rr), np.hypot(al, be)))
    return float(np.arcsinh(np.sqrt(rr)))


def geodesic_hits_point(p, t, target, amb, tol: float = 1e-8) -> bool:
    return distance_to_geodesic(p, t, target, amb) <= tol


def totally_geodesic_projection(x):
    """(x1, 0, x3, x4) -> (x1/x4, x3/x4), mapping geodesics to straight lines."""
    x = np.asarray(x, dtype=float)
    if np.any(x[..., 3] <= 0):
        raise ValueError("projection needs x4 > 0")
    return np.stack([x[..., 0] / x[..., 3], x[..., 2] / x[..., 3]], axis=-1)


def inverse_totally_geodesic_projection(q, eps):
    """Inverse of :func:`totally_geodesic_projection` onto {x2 = 0}."""
    eps = _eps_of(eps)
    q = np.asarray(q, dtype=float)
    r2 = q[..., 0] ** 2 + q[..., 1] ** 2
    den = 1.0 + eps * r2
    if np.any(den <= 0):
        raise ValueError("point outside the image of the projection")
    x4 = 1.0 / np.sqrt(den)
    return np.stack([q[..., 0] * x4, np.zeros_like(x4), q[..., 1] * x4, x4], axis=-1)


@dataclass(frozen=True)
class UmbilicSurface:
    """S[m, d] = {x : <x, m> = d} with m normalised to <m,m> in {0, +-1}."""

    m: np.ndarray
    d: float
    epsilon: int

    @classmethod
    def normalized(cls, m, d, eps):
        eps = _check_sign(eps)
        m = np.asarray(m, dtype=float)
        nn = float(inner(m, m, eps))
        if abs(nn) > 1e-14:
            scale = 1.0 / np.sqrt(abs(nn))
            m, d = m * scale, d * scale
        # d >= 0 when possible, otherwise first nonzero coordinate of m positive
        flip = d < 0 or (d == 0 and m[np.flatnonzero(np.abs(m) > 1e-15)[0]] < 0)
        if flip:
            m, d = -m, -d
        if inner(m, m, eps) - eps * d * d <= 0:
            raise ValueError("umbilic surface is empty")
        return cls(m, float(d), eps)

    def residual(self, x):
        return inner(x, self.m, self.epsilon) - self.d


@dataclass(frozen=True)
class GeodesicBall:
    """B[center, d] = {x : <x, center> >= d}."""

    center: np.ndarray
    d: float
    epsilon: int

    def __post_init__(self):
        eps = _check_sign(self.epsilon)
        if eps == 1 and not abs(self.d) < 1:
            raise ValueError("spherical ball needs |d| < 1")
        if eps == -1 and not self.d < -1:
            raise ValueError("hyperbolic ball needs d < -1")

    @property
    def radius(self) -> float:
        if self.epsilon == 1:
            return float(np.arccos(self.d))
        return float(np.arccosh(-self.d))

    def contains(self, x, tol=1e-8):
        return inner(x, self.center, self.epsilon) >= self.d - tol
