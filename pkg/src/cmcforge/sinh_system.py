"""Seed solutions of the sinh-Gordon equation with one family of spherical curvature lines.

A seed is indexed by (a, b, c) with a, b, c >= 1. The u-dependence of the
solution is governed by a two degree of freedom Hamiltonian system in (y, z),
the v-dependence by a quartic p(0, x) whose two positive roots bound
X(v) = exp(rho(0, v)).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .spaceform import Ambient

log = logging.getLogger(__name__)

RHO_GUARD = 50.0
SCAN_STEP = 1e-2


class SeedDomainError(ValueError):
    """Seed parameters outside the admissible region for an operation."""


@dataclass(frozen=True)
class SeedParams:
    a: float
    b: float
    c: float

    def __post_init__(self):
        for name in ("a", "b", "c"):
            val = getattr(self, name)
            if not np.isfinite(val) or val < 1.0:
                raise SeedDomainError(f"{name} must be >= 1, got {val!r}")
            object.__setattr__(self, name, float(val))

    @property
    def A(self):
        return 0.5 * (self.a + 1.0 / self.a)

    @property
    def B(self):
        return 0.5 * (self.b + 1.0 / self.b)

    @property
    def C(self):
        return 0.5 * (self.c - 1.0 / self.c)

    @property
    def a_hat(self):
        return 1.0 - self.A * self.B + self.C**2

    @property
    def yp0(self):
        return 0.5 * (self.A + self.B) * self.C

    @property
    def zp0(self):
        return 0.5 * (self.B - self.A) * np.sqrt(self.C**2 + 1.0)

    @property
    def rho00(self):
        return -np.log(self.a * self.c)

    # roots of the degenerate cubic at a = 1
    @property
    def r1(self):
        return -((self.b - 1.0) ** 2) / (4.0 * self.b)

    @property
    def r3(self):
        return 0.25 * (self.c + 1.0 / self.c) ** 2

    def initial_state(self):
        return np.array([0.0, 0.0, self.yp0, self.zp0])


def derive_initials(a, b, c) -> SeedParams:
    return SeedParams(a, b, c)


def bc_from_r(r1, r3):
    """Invert r1 = -(b-1)^2/(4b), r3 = (c+1/c)^2/4 on b, c >= 1."""
    if r1 > 0 or r3 < 1:
        raise SeedDomainError(f"need r1 <= 0 and r3 >= 1, got ({r1}, {r3})")
    k = 1.0 - 2.0 * r1
    b = k + np.sqrt(max(k * k - 1.0, 0.0))
    c = np.sqrt(r3) + np.sqrt(max(r3 - 1.0, 0.0))
    return float(b), float(c)


# ---------------------------------------------------------------- quartic p(0,x)

def quartic_roots(sp: SeedParams):
    return np.array([1.0 / (sp.a * sp.c), sp.a / sp.c, -sp.b * sp.c, -sp.c / sp.b])


def quartic_factored(sp: SeedParams, x):
    x = np.asarray(x, dtype=float)
    r = quartic_roots(sp)
    return -(x - r[1]) * (x - r[0]) * (x - r[2]) * (x - r[3])


def quartic_coeffs(sp: SeedParams):
    """Coefficients of p(0, x), highest degree first."""
    return np.array([-1.0, -4.0 * (sp.yp0 + sp.zp0), 2.0 - 4.0 * sp.a_hat,
                     4.0 * (sp.yp0 - sp.zp0), -1.0])


def quartic_expanded(sp: SeedParams, x):
    return np.polyval(quartic_coeffs(sp), x)


def quartic_derivative(sp: SeedParams, x):
    return np.polyval(np.polyder(quartic_coeffs(sp)), x)


# ---------------------------------------------------------------- Hamiltonian system

def hamiltonian_rhs(a_hat):
    def rhs(u, w):
        y, z, yp, zp = w
        d = y * y - z * z
        return np.array([yp, zp, (a_hat - 1.0) * y - 2.0 * y * d, a_hat * z - 2.0 * z * d])
    return rhs


def energy_h(w, a_hat):
    y, z, yp, zp = w
    return yp**2 - zp**2 - (a_hat - 1.0) * y**2 + a_hat * z**2 + (y**2 - z**2) ** 2


def energy_k(w, a_hat):
    y, z, yp, zp = w
    return (z * yp - y * zp) ** 2 + zp**2 + z**2 * (y**2 - z**2 - a_hat)


@dataclass
class HamiltonianTrajectory:
    """Dense solution of the (y, z) system on [0, u_max]."""

    sp: SeedParams
    u_max: float
    tol: float
    sol: object = field(repr=False)
    h: float = 0.0
    k: float = 0.0

    def __call__(self, u):
        """State (y, z, y', z') at u; odd extension for u < 0."""
        u = np.asarray(u, dtype=float)
        au = np.abs(u)
        if np.any(au > self.u_max * (1 + 1e-12)):
            raise ValueError(f"u outside the integrated range [0, {self.u_max}]")
        w = self.sol(np.minimum(au, self.u_max))
        sgn = np.where(u < 0, -1.0, 1.0)
        # y, z odd; y', z' even
        return np.stack([sgn * w[0], sgn * w[1], w[2], w[3]])

    def drift(self, n=2001):
        uu = np.linspace(0.0, self.u_max, n)
        w = self.sol(uu)
        return (float(np.max(np.abs(energy_h(w, self.sp.a_hat) - self.h))),
                float(np.max(np.abs(energy_k(w, self.sp.a_hat) - self.k))))

    def extended(self, u_max):
        return integrate_hamiltonian(self.sp, u_max, self.tol)


def integrate_hamiltonian(sp: SeedParams, u_max, tol=1e-12) -> HamiltonianTrajectory:
    if u_max <= 0 or tol <= 0:
        raise ValueError("u_max and tol must be positive")
    w0 = sp.initial_state()
    sol = solve_ivp(hamiltonian_rhs(sp.a_hat), (0.0, u_max), w0, method="DOP853",
                    rtol=tol, atol=tol * 1e-2, dense_output=True)
    if not sol.success:
        raise RuntimeError(f"Hamiltonian integration failed near u={sol.t[-1]}: {sol.message}")
    return HamiltonianTrajectory(sp, float(u_max), float(tol), sol.sol,
                                 float(energy_h(w0, sp.a_hat)), float(energy_k(w0, sp.a_hat)))


# ---------------------------------------------------------------- (s, t) coordinates

def cubic_q(x, a_hat, h, k):
    return -x**3 + (a_hat + 1.0) * x**2 + (h - a_hat) * x + k


@dataclass
class STCoordinates:
    sp: SeedParams
    r1: float
    r3: float
    lam: np.ndarray
    s: np.ndarray
    t: np.ndarray
    u: np.ndarray
    q_coeffs: np.ndarray

    def q(self, x):
        return np.polyval(self.q_coeffs, x)


def st_coordinates(sp: SeedParams, traj: HamiltonianTrajectory, lam_max, n=2001, tol=1e-12):
    """Integrate s, t in second-order form, together with u(lambda)."""
    ah, h, k = sp.a_hat, traj.h, traj.k
    qc = np.array([-1.0, ah + 1.0, h - ah, k])
    # G(x) = x (x-1) q(x); s'' = G'(s)/2, t'' = G'(t)/2, 2 u' = s - t
    G = np.polymul(np.array([1.0, -1.0, 0.0]), qc)
    dG = np.polyder(G)

    def rhs(lam, w):
        s, t, sp_, tp, _ = w
        return np.array([sp_, tp, 0.5 * np.polyval(dG, s), 0.5 * np.polyval(dG, t),
                         0.5 * (s - t)])

    lam = np.linspace(0.0, lam_max, n)
    sol = solve_ivp(rhs, (0.0, lam_max), np.array([1.0, 0.0, 0.0, 0.0, 0.0]),
                    method="DOP853", rtol=tol, atol=tol * 1e-2, t_eval=lam)
    if not sol.success:
        raise RuntimeError(sol.message)
    return STCoordinates(sp, sp.r1, sp.r3, lam, sol.y[0], sol.y[1], sol.y[4], qc)


# ---------------------------------------------------------------- half-period sigma

def sigma_closed(b, c):
    """Half-period at a = 1."""
    return 2.0 * np.pi * c / np.sqrt(1.0 + (b + 1.0 / b) * c**2 + c**4)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def sigma(sp: SeedParams) -> float:
    """Half-period: integral of 2/sqrt(p(0,x)) between the two positive roots.

    With x = x_lo + (x_hi - x_lo) sin^2(phi) both square-root endpoint
    singularities cancel and the integrand 4/sqrt((x + bc)(x + c/b)) is
    smooth on [0, pi/2], so Gauss-Legendre converges geometrically.
    """
    if sp.a == 1.0:
        return float(sigma_closed(sp.b, sp.c))
    lo, hi = 1.0 / (sp.a * sp.c), sp.a / sp.c
    phi = 0.25 * np.pi * (_GL_NODES + 1.0)
    x = lo + (hi - lo) * np.sin(phi) ** 2
    g = (x + sp.b * sp.c) * (x + sp.c / sp.b)
    val = 0.25 * np.pi * np.sum(_GL_WEIGHTS * 4.0 / np.sqrt(g))
    # coarse check of quadrature convergence
    n2, w2 = np.polynomial.legendre.leggauss(32)
    phi2 = 0.25 * np.pi * (n2 + 1.0)
    x2 = lo + (hi - lo) * np.sin(phi2) ** 2
    val2 = 0.25 * np.pi * np.sum(w2 * 4.0 / np.sqrt((x2 + sp.b * sp.c) * (x2 + sp.c / sp.b)))
    if abs(val - val2) > 1e-12 * max(1.0, val):
        raise RuntimeError("sigma quadrature did not converge")
    return float(val)


def sigma_naive(sp: SeedParams) -> float:
    """Same half-period with x = root + tau^2 at each endpoint (independent route)."""
    from scipy.integrate import quad
    lo, hi = 1.0 / (sp.a * sp.c), sp.a / sp.c
    mid = 0.5 * (lo + hi)
    p = lambda x: quartic_factored(sp, x)
    # x = lo + t^2 on [lo, mid]; x = hi - t^2 on [mid, hi]
    f1 = lambda t: 4.0 * t / np.sqrt(max(p(lo + t * t), 1e-300))
    f2 = lambda t: 4.0 * t / np.sqrt(max(p(hi - t * t), 1e-300))
    T = np.sqrt(mid - lo)
    i1 = quad(f1, 0.0, T, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    i2 = quad(f2, 0.0, T, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    return float(i1 + i2)


# ---------------------------------------------------------------- profile X(v)

@dataclass
class ProfileX:
    sp: SeedParams
    sigma: float
    v: np.ndarray
    X: np.ndarray
    Xp: np.ndarray
    sol: object = field(default=None, repr=False)
    half_period_ode: float = float("nan")

    def __call__(self, v):
        """X and X' at v, using 2 sigma periodicity."""
        v = np.asarray(v, dtype=float)
        if self.sol is None:
            return np.full_like(v, self.X[0]), np.zeros_like(v)
        w = np.mod(v, 2.0 * self.sigma)
        out = self.sol(w)
        return out[0], out[1]

    def residual(self):
        return float(np.max(np.abs(4.0 * self.Xp**2 - quartic_factored(self.sp, self.X))))


def solve_X(sp: SeedParams, n_grid=256, tol=1e-13) -> ProfileX:
    """Second-order form X'' = p'(0, X)/8 from the lower turning point."""
    if n_grid < 64:
        raise ValueError("n_grid must be >= 64")
    sg = sigma(sp)
    v = np.linspace(0.0, 2.0 * sg, n_grid)
    if sp.a == 1.0:
        X = np.full(n_grid, 1.0 / sp.c)
        return ProfileX(sp, sg, v, X, np.zeros(n_grid), None, sg)
    dp = np.polyder(quartic_coeffs(sp))

    def rhs(_, w):
        return np.array([w[1], np.polyval(dp, w[0]) / 8.0])

    def turn(_, w):
        return w[1]
    turn.direction = -1.0

    x0 = np.array([1.0 / (sp.a * sp.c), 0.0])
    sol = solve_ivp(rhs, (0.0, 2.0 * sg * 1.0000001), x0, method="DOP853", rtol=tol,
                    atol=tol * 1e-2, dense_output=True, events=turn)
    if not sol.success:
        raise RuntimeError(sol.message)
    ev = sol.t_events[0]
    if len(ev) == 0:
        raise RuntimeError("upper turning point of X not found")
    w = sol.sol(v)
    return ProfileX(sp, sg, v, w[0], w[1], sol.sol, float(ev[0]))


# ---------------------------------------------------------------- rho field

@dataclass
class RhoField:
    u: np.ndarray
    v: np.ndarray
    rho: np.ndarray  # shape (n_u, n_v)
    y: np.ndarray
    z: np.ndarray
    sigma: float

    @property
    def hu(self):
        return float(self.u[1] - self.u[0])

    @property
    def hv(self):
        return float(self.v[1] - self.v[0])

    def sinh_gordon_residual(self):
        """Five-point Laplacian of rho plus cosh(rho) sinh(rho) at interior nodes."""
        r = self.rho
        hu, hv = self.hu, self.hv
        lap = ((r[2:, 1:-1] - 2 * r[1:-1, 1:-1] + r[:-2, 1:-1]) / hu**2
               + (r[1:-1, 2:] - 2 * r[1:-1, 1:-1] + r[1:-1, :-2]) / hv**2)
        c = r[1:-1, 1:-1]
        return lap + np.cosh(c) * np.sinh(c)

    def first_order_residual(self):
        """Central differences of rho_u against y cosh(rho) + z sinh(rho)."""
        r = self.rho
        du = (r[2:] - r[:-2]) / (2 * self.hu)
        c = r[1:-1]
        return du - (self.y[1:-1, None] * np.cosh(c) + self.z[1:-1, None] * np.sinh(c))


def _rho_lines(sp, rho0, u_end, n_u, tol, sign=1.0):
    n_v = len(rho0)
    ah = sp.a_hat

    def rhs(_, w):
        y, z, yp, zp = w[:4]
        r = w[4:]
        d = y * y - z * z
        out = np.empty_like(w)
        out[0], out[1] = yp, zp
        out[2] = (ah - 1.0) * y - 2.0 * y * d
        out[3] = ah * z - 2.0 * z * d
        out[4:] = sign * (y * np.cosh(r) + z * np.sinh(r))
        return out

    def blow(_, w):
        return RHO_GUARD - np.max(np.abs(w[4:]))
    blow.terminal = True

    w0 = np.concatenate([np.array([0.0, 0.0, sp.yp0, sp.zp0]), rho0])
    uu = np.linspace(0.0, u_end, n_u)
    sol = solve_ivp(rhs, (0.0, u_end), w0, method="DOP853", rtol=tol, atol=tol * 1e-2,
                    t_eval=uu, events=blow)
    if sol.status == 1:
        raise RuntimeError(f"|rho| exceeded {RHO_GUARD} near u={sol.t_events[0][0]:.6g}")
    if not sol.success:
        raise RuntimeError(sol.message)
    return sol.y[0], sol.y[1], sol.y[4:4 + n_v].T


def solve_rho(sp: SeedParams, profile: ProfileX, u_max, n_u=101, v_max=None, n_v=201,
              tol=1e-12) -> RhoField:
    """rho on [-u_max, u_max] x [0, v_max] from rho_u = y cosh rho + z sinh rho.

    Each v-line starts at rho(0, v) = log X(v); both u-directions are
    integrated so the even symmetry in u is a genuine check.
    """
    if n_u % 2 == 0:
        n_u += 1
    if v_max is None:
        v_max = 2.0 * profile.sigma
    v = np.linspace(0.0, v_max, n_v)
    X, _ = profile(v)
    rho0 = np.log(X)
    half = n_u // 2 + 1
    yp, zp, rp = _rho_lines(sp, rho0, u_max, half, tol)
    # negative direction in t = -u: Y(t) = y(-t) has Y'(0) = -y'(0) and
    # d rho/dt = -(Y cosh rho + Z sinh rho)
    yn, zn, rn = _rho_lines(_Reflected(sp), rho0, u_max, half, tol, sign=-1.0)
    u = np.linspace(-u_max, u_max, n_u)
    rho = np.concatenate([rn[::-1][:-1], rp], axis=0)
    y = np.concatenate([yn[::-1][:-1], yp])
    z = np.concatenate([zn[::-1][:-1], zp])
    return RhoField(u, v, rho, y, z, profile.sigma)


class _Reflected:
    """Seed data for integrating toward negative u (t = -u)."""

    def __init__(self, sp):
        self.a_hat = sp.a_hat
        self.yp0 = -sp.yp0
        self.zp0 = -sp.zp0


# ---------------------------------------------------------------- roots u1 and tau

def first_root(f, lo, hi, step=SCAN_STEP, xtol=1e-14):
    """First sign change of f on (lo, hi] by a uniform scan plus Brent refinement."""
    n = max(2, int(np.ceil((hi - lo) / step)) + 1)
    grid = np.linspace(lo, hi, n)
    vals = f(grid)
    # skip an exact zero at the left end
    start = 1 if vals[0] == 0 else 0
    sgn = np.sign(vals[start:])
    idx = np.flatnonzero(sgn[:-1] * sgn[1:] <= 0)
    if len(idx) == 0:
        return None
    i = idx[0] + start
    if vals[i + 1] == 0:
        return float(grid[i + 1])
    return float(brentq(lambda s: float(f(np.array([s]))[0]), grid[i], grid[i + 1],
                        xtol=xtol, rtol=1e-15, maxiter=200))


def find_u1(traj: HamiltonianTrajectory) -> float:
    sp = traj.sp
    if not sp.c > 1.0:
        raise SeedDomainError("u1 needs c > 1")
    for attempt in range(2):
        r = first_root(lambda u: traj(u)[0], 0.0, traj.u_max)
        if r is not None:
            return r
        if attempt == 0:
            traj = traj.extended(2.0 * traj.u_max)
    raise RuntimeError("no zero of y found")


def in_W(sp: SeedParams) -> bool:
    return bool(sp.b >= sp.a and sp.C**2 > (sp.A - sp.B) ** 2 / (4.0 * sp.A * sp.B))


def find_tau(traj: HamiltonianTrajectory, sp: SeedParams | None = None) -> float:
    sp = traj.sp if sp is None else sp
    if not in_W(sp):
        raise SeedDomainError(f"({sp.a}, {sp.b}, {sp.c}) is outside the free boundary region")
    u1 = find_u1(traj)
    if traj.u_max < u1:
        traj = traj.extended(1.1 * u1)
    f = lambda u: (lambda w: w[0] - w[1])(traj(u))
    # guard the right end: y - z may vanish exactly at u1 (z == 0)
    r = first_root(f, 0.0, u1, step=min(SCAN_STEP, u1 / 50))
    if r is None:
        if abs(f(np.array([u1]))[0]) < 1e-10:
            return u1
        raise RuntimeError("no root of y - z in (0, u1]")
    return r


# ---------------------------------------------------------------- regions

def in_R(sp: SeedParams, amb: Ambient) -> bool:
    return bool(sp.a == 1.0 and (amb.H - amb.mu * sp.c**2) ** 2 + amb.epsilon > 0)


def in_What(r1, r3, amb: Ambient) -> bool:
    bound = max((r1 - 1.0) ** 2 / (1.0 - 2.0 * r1), -amb.epsilon * (amb.H + amb.mu) / (2.0 * amb.mu))
    return bool(r1 <= 0 and r3 > bound)


def region_flags(sp: SeedParams, amb: Ambient) -> dict:
    flags = {"in_O": True, "in_W": in_W(sp), "in_R": in_R(sp, amb)}
    flags["in_What"] = in_What(sp.r1, sp.r3, amb) if sp.a == 1.0 else False
    return flags
