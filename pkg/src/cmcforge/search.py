"""Constructive searches: level-line sweeps of the period map, continuation of
the free boundary curve into a > 1, annulus assembly, certification and the
capillary branch."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize_scalar

from .frame import (center_from_states, h_frak, find_ustar, integrate_frame, rebase,
                    reflection)
from .mesh import Mesh, closed_loop_simple, grid_mesh, self_intersections
from .period import level_b, level_c, theta_closed, theta_numeric, upsilon_line
from .rotational import (RegimeError, contact_angle, find_stilde, integrate_profile,
                         tilde_u)
from .sinh_system import (SeedDomainError, SeedParams, bc_from_r, find_tau,
                          integrate_hamiltonian, in_What, sigma)
from .spaceform import Ambient, GeodesicBall, inner, stereographic

log = logging.getLogger(__name__)

THETA_TOL = 1e-8
MAX_DENOMINATOR = 64


class SweepError(RuntimeError):
    """No sign change of f before the level line leaves the admissible region."""


class ContinuationError(RuntimeError):
    def __init__(self, msg, last_point=None):
        super().__init__(msg)
        self.last_point = last_point


def as_fraction(theta0) -> Fraction:
    q = theta0 if isinstance(theta0, Fraction) else Fraction(theta0).limit_denominator(10**6)
    if not -1 < q < 0:
        raise ValueError(f"theta0 must lie in (-1, 0), got {q}")
    return q


# ---------------------------------------------------------------- interval J

def periodon(n, amb: Ambient) -> str:
    """'strict', 'equality' or 'fails' for (mu - H)/(2 mu) <= 1/n^2."""
    lhs = (amb.mu - amb.H) / (2.0 * amb.mu)
    rhs = 1.0 / (n * n)
    if abs(lhs - rhs) <= 1e-12:
        return "equality"
    return "strict" if lhs < rhs else "fails"


@dataclass
class IntervalJ:
    lo: float
    hi: float
    empirical: bool
    l_slope: float | None = None

    def contains(self, t):
        return self.lo < t < self.hi


def _lline_point(theta0, l, amb: Ambient):
    t2 = theta0 * theta0
    H, mu = amb.H, amb.mu
    rbar = (1.0 - (H + mu) / (2.0 * mu * (1.0 - t2))) / (t2 / (1.0 - t2) - l)
    return rbar, (-rbar, l * rbar + 1.0)


def _lline_conditions(theta0, l, amb: Ambient):
    rbar, (r1, r3) = _lline_point(theta0, l, amb)
    if not rbar > 0 or not in_What(r1, r3, amb):
        return False
    f, _ = sweep_f(r1, r3, amb)
    return bool(np.isfinite(f) and f > 0)


def interval_J(amb: Ambient, n_scan=24) -> IntervalJ:
    eps, H, mu = amb.epsilon, amb.H, amb.mu
    if 8 * H * H - eps > 0:
        if eps == -1:
            return IntervalJ(-1.0 / np.sqrt(3.0), 0.0, False)
        return IntervalJ(-1.0 / np.sqrt(3.0), -np.sqrt((mu - H) / (2.0 * mu)), False)
    # eps = +1 and small H: right end point detected along the L-line construction
    lo = -np.sqrt((mu - H) / (2.0 * mu))
    l = 0.5 * (mu - H) / (mu + H)
    top = -np.sqrt(l / (1.0 + l))
    grid = np.linspace(lo, top, n_scan + 2)[1:-1]
    last = None
    for t in grid:
        ok = False
        try:
            ok = _lline_conditions(t, l, amb)
        except (SeedDomainError, RegimeError, RuntimeError, ValueError):
            ok = False
        if not ok:
            break
        last = t
    if last is None:
        raise SweepError("L-line conditions fail next to the left end point")
    return IntervalJ(float(lo), float(last), True, float(l))


# ---------------------------------------------------------------- sweep

def sweep_f(r1, r3, amb: Ambient, tol=1e-12):
    """f = tau - u~ at the rotational seed with roots (r1, r3); also returns (b, c, tau, u~)."""
    b, c = bc_from_r(r1, r3)
    sp = SeedParams(1.0, b, c)
    traj = integrate_hamiltonian(sp, 4.0, tol)
    tau = find_tau(traj, sp)
    ut = tilde_u(r3, amb)
    return float(tau - ut), dict(b=b, c=c, tau=float(tau), u_tilde=float(ut))


@dataclass
class LevelSweep:
    theta0: Fraction
    amb: Ambient
    r: np.ndarray
    f: np.ndarray
    tau: np.ndarray
    u_tilde: np.ndarray
    r_star: float
    bracket: tuple
    f_star: float
    seed: tuple                  # (1, b*, c*)
    h_step: float
    f_check: tuple               # f(r* -+ h)
    h_check: tuple               # h(r* -+ h)
    entry: tuple                 # (r, reason)
    exit: tuple
    variant: str                 # 'upsilon' or 'equality line'

    @property
    def sign_change_f(self):
        return bool(self.f_check[0] * self.f_check[1] < 0)

    @property
    def sign_change_h(self):
        return bool(self.h_check[0] * self.h_check[1] < 0)


def _what_boundary(theta0, amb, r_a, r_b, inside_at_a):
    """Bisection for the r where Upsilon crosses the boundary of W-hat."""
    g = lambda r: in_What(*upsilon_line(theta0, r, amb), amb)
    lo, hi = r_a, r_b
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if g(mid) == inside_at_a:
            lo = mid
        else:
            hi = mid
    return lo if inside_at_a else hi


def _exit_reason(theta0, r, amb: Ambient):
    r1, r3 = upsilon_line(theta0, r, amb)
    curve = (r1 - 1.0) ** 2 / (1.0 - 2.0 * r1)
    other = -amb.epsilon * (amb.H + amb.mu) / (2.0 * amb.mu)
    return "r3 = (r1-1)^2/(1-2 r1)" if curve >= other else "r3 = -eps (H+mu)/(2 mu)"


def what_interval(theta0, amb: Ambient, r_max=200.0, dr=1e-2):
    """First sub-interval of [0, r_max] where Upsilon lies in W-hat."""
    g = lambda r: in_What(*upsilon_line(theta0, r, amb), amb)
    r = 0.0
    inside = g(0.0)
    if inside:
        r_in, why_in = 0.0, "r = 0"
    else:
        while r < r_max and not g(r):
            r += dr
        if r >= r_max:
            raise SweepError("the level line never enters W-hat")
        r_in = _what_boundary(theta0, amb, r, max(r - dr, 0.0), True)
        why_in = _exit_reason(theta0, r_in, amb)
    r = max(r, r_in)
    step = dr
    while r < r_max and g(r):
        r += step
        step = min(step * 1.1, 0.05)
    if r >= r_max:
        return (r_in, why_in), (r_max, "r_max")
    r_out = _what_boundary(theta0, amb, r - step, r, True)
    return (r_in, why_in), (r_out, _exit_reason(theta0, r_out, amb))


def _adaptive_grid(r_in, r_out, n_base=24, n_refine=10, refine_in=False):
    """Uniform base grid plus geometric clustering toward the exit (and entry)."""
    L = r_out - r_in
    base = r_in + L * np.linspace(0.0, 1.0, n_base + 1)[:-1]
    k = np.arange(1, n_refine + 1)
    tail = r_out - (L / n_base) * 0.5**k
    pts = [base[1:] if refine_in else base, tail]
    if refine_in:
        pts.append(r_in + (L / n_base) * 0.5**k)
    grid = np.unique(np.concatenate(pts))
    return grid[(grid >= r_in) & (grid < r_out)]


def sweep_upsilon(theta0, amb: Ambient, n_base=24, h_check=1e-2, tol=1e-12,
                  r_max=200.0) -> LevelSweep:
    """Walk the level line Theta(1, ., .) = theta0 and locate the first zero of tau - u~."""
    q = as_fraction(theta0)
    t0 = float(q)
    (r_in, why_in), (r_out, why_out) = what_interval(t0, amb, r_max=r_max)
    n_den = q.denominator if q.numerator == -1 else None
    variant = "equality line" if n_den and periodon(n_den, amb) == "equality" else "upsilon"
    start = r_in
    # entering through the boundary of W-hat (r_in > 0) brings a second steep end
    grid = _adaptive_grid(start, r_out, n_base, refine_in=r_in > 0)
    if variant == "equality line":
        grid = grid[grid > 0]
        grid = np.unique(np.concatenate([(r_out - start) * np.array([1e-3, 3e-3, 1e-2]), grid]))

    def ev(r):
        r1, r3 = upsilon_line(t0, r, amb)
        try:
            return sweep_f(r1, r3, amb, tol)
        except (SeedDomainError, RegimeError, RuntimeError):
            return np.nan, dict(b=np.nan, c=np.nan, tau=np.nan, u_tilde=np.nan)

    F, TAU, UT = [], [], []
    for r in grid:
        f, d = ev(r)
        F.append(f)
        TAU.append(d["tau"])
        UT.append(d["u_tilde"])
    F = np.array(F)
    ok = np.isfinite(F)
    idx = [i for i in range(len(grid) - 1)
           if ok[i] and ok[i + 1] and np.sign(F[i]) * np.sign(F[i + 1]) < 0]
    if not idx:
        raise SweepError(f"no sign change of f on [{start:.6g}, {r_out:.6g}); exit through {why_out}")
    i = idx[0]
    lo, hi = float(grid[i]), float(grid[i + 1])
    r_star = float(brentq(lambda r: ev(r)[0], lo, hi, xtol=1e-14, rtol=1e-15, maxiter=200))
    f_star, d_star = ev(r_star)
    b_s, c_s = d_star["b"], d_star["c"]
    h = min(h_check, 0.5 * (r_star - start), 0.5 * (r_out - r_star))
    fm, fp = ev(r_star - h)[0], ev(r_star + h)[0]

    def hh(r):
        b, c = bc_from_r(*upsilon_line(t0, r, amb))
        return h_frak(SeedParams(1.0, b, c), amb, tol)
    hm, hp = hh(r_star - h), hh(r_star + h)
    return LevelSweep(q, amb, grid, F, np.array(TAU), np.array(UT), r_star, (lo, hi), float(f_star),
                      (1.0, b_s, c_s), float(h), (float(fm), float(fp)), (float(hm), float(hp)),
                      (float(r_in), why_in), (float(r_out), why_out), variant)


def dense_sweep_root(theta0, amb: Ambient, lo, hi, step=1e-2):
    """Uniform f-scan plus bisection; independent of the adaptive sweep."""
    t0 = float(as_fraction(theta0))
    r = np.arange(lo, hi + 0.5 * step, step)
    f = np.array([sweep_f(*upsilon_line(t0, x, amb), amb)[0] for x in r])
    i = int(np.flatnonzero(np.sign(f[:-1]) * np.sign(f[1:]) < 0)[0])
    a, b = r[i], r[i + 1]
    fa = f[i]
    for _ in range(60):
        m = 0.5 * (a + b)
        fm = sweep_f(*upsilon_line(t0, m, amb), amb)[0]
        if np.sign(fm) == np.sign(fa):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


# ---------------------------------------------------------------- continuation

@dataclass
class FamilyMember:
    eta: float
    a: float
    b: float
    c: float
    theta: float
    h: float
    c_resolved: float
    newton_iters: int


@dataclass
class FamilyCurve:
    theta0: Fraction
    amb: Ambient
    seed: tuple
    members: list
    step: float
    certificates: dict = field(default_factory=dict)

    def at(self, eta, tol=1e-9):
        for m in self.members:
            if abs(m.eta - eta) <= tol:
                return m
        raise KeyError(eta)


def theta_of(sp: SeedParams, amb: Ambient, tol=1e-12) -> float:
    if sp.a == 1.0:
        return theta_closed(sp.b, sp.c, amb)
    return theta_numeric(sp, amb, tol=tol).theta


def _residual(x, theta0, amb, tol):
    a, b, c = x
    sp = SeedParams(a, b, c)
    return np.array([theta_of(sp, amb, tol) - theta0, h_frak(sp, amb, tol)])


def _newton_step(x0, t, ds, theta0, amb, tol, max_iter=12, fd=1e-6):
    """Solve [Theta - theta0, h, t . ((a, b) - (a0, b0)) - ds] = 0 in (a, b, c)."""
    base = np.asarray(x0, dtype=float)
    x = base.copy()
    x[:2] += ds * t
    for it in range(1, max_iter + 1):
        r = _residual(x, theta0, amb, tol)
        G = np.concatenate([r, [t @ (x[:2] - base[:2]) - ds]])
        J = np.zeros((3, 3))
        for j in range(3):
            e = np.zeros(3)
            e[j] = fd * max(1.0, abs(x[j]))
            if j == 0 and x[0] - e[0] < 1.0:
                J[:2, j] = (_residual(x + e, theta0, amb, tol) - r) / e[j]
            else:
                J[:2, j] = (_residual(x + e, theta0, amb, tol)
                            - _residual(x - e, theta0, amb, tol)) / (2 * e[j])
        J[2, :2] = t
        dx = np.linalg.solve(J, -G)
        x = x + dx
        if x[0] < 1.0 or x[1] < 1.0 or x[2] < 1.0:
            raise SeedDomainError("Newton left the seed domain")
        if np.max(np.abs(dx)) < 1e-12:
            return x, it
    r = _residual(x, theta0, amb, tol)
    if np.max(np.abs(r)) < 1e-10:
        return x, max_iter
    raise ContinuationError("Newton corrector did not converge")


def continue_family(theta0, seed, amb: Ambient, eta_max=0.02, step=5e-3, tol=1e-12,
                    min_step=1e-4, verify=True) -> FamilyCurve:
    """Pseudo-arclength continuation of {Theta = theta0, h = 0} from (1, b*, c*) into a > 1.

    eta is the accumulated pseudo-arclength in the (a, b) plane. The tangent
    at the seed is (1, 0): every quantity depends on a only through
    (a + 1/a)/2, which is stationary at a = 1.
    """
    q = as_fraction(theta0)
    t0 = float(q)
    a0, b0, c0 = map(float, seed)
    if a0 != 1.0:
        raise ValueError("seed must have a = 1")
    sp0 = SeedParams(a0, b0, c0)
    h0 = h_frak(sp0, amb, tol)
    members = [FamilyMember(0.0, a0, b0, c0, theta_of(sp0, amb), h0, c0, 0)]
    x = np.array([a0, b0, c0])
    t = np.array([1.0, 0.0])
    eta = 0.0
    n_steps = int(round(eta_max / step))
    for k in range(1, n_steps + 1):
        ds = step
        target = k * step
        # sub-steps only when the full step fails
        while eta < target - 1e-15:
            ds = min(ds, target - eta)
            try:
                x_new, iters = _newton_step(x, t, ds, t0, amb, tol)
            except (ContinuationError, SeedDomainError, RuntimeError, np.linalg.LinAlgError):
                ds *= 0.5
                if ds < min_step:
                    raise ContinuationError("continuation step collapsed", last_point=tuple(x))
                continue
            d = x_new[:2] - x[:2]
            t = d / np.linalg.norm(d)
            x = x_new
            eta += ds
        sp = SeedParams(*x)
        c_res = x[2]
        if verify:
            c_res = level_c(x[0], x[1], t0, amb, c0=x[2], tol=tol)
            sp = SeedParams(x[0], x[1], c_res)
        th = theta_numeric(sp, amb, n=4097, tol=tol).theta
        hv = h_frak(sp, amb, tol)
        if not (x[0] > 1.0 and abs(th - t0) <= THETA_TOL and abs(hv) <= 1e-6):
            raise ContinuationError(f"member at eta={target} fails re-verification "
                                    f"(a={x[0]}, Theta-theta0={th - t0:.3g}, h={hv:.3g})",
                                    last_point=tuple(x))
        members.append(FamilyMember(float(target), float(x[0]), float(x[1]), float(x[2]),
                                    float(th), float(hv), float(c_res), iters))
    return FamilyCurve(q, amb, (a0, b0, c0), members, step)


# ---------------------------------------------------------------- annulus assembly

def rational_period(theta, theta_tol=THETA_TOL, max_den=MAX_DENOMINATOR) -> Fraction:
    q = Fraction(float(theta)).limit_denominator(max_den)
    if abs(float(q) - theta) > theta_tol:
        raise SeedDomainError(f"period {theta!r} is not rational within {theta_tol} "
                              f"(nearest {q} with denominator <= {max_den})")
    return q


@dataclass
class Annulus:
    sp: SeedParams
    amb: Ambient
    u0: float
    theta: float
    period: Fraction
    sigma: float
    patch: object                 # rebased SurfacePatch on [-u0, u0] x [0, 2 n sigma]
    closure_gap: float
    per_sigma: int
    isometry: np.ndarray          # total isometry applied to the frame output

    @property
    def n(self):
        return self.period.denominator

    @property
    def m(self):
        return self.period.numerator

    def grid(self):
        """psi on the distinct columns (v = 2 n sigma dropped)."""
        return self.patch.psi[:, :-1]

    def points3d(self, stride=1):
        P = self.grid()[::stride, ::stride]
        return stereographic(P, self.amb.epsilon, tol=1e-7)

    def mesh(self, stride=1) -> Mesh:
        return grid_mesh(self.points3d(stride))


def _ball_from_row(patch, i_row, amb: Ambient, inside_point):
    """Umbilic sphere through the v-line at row i_row, oriented to contain inside_point."""
    eps = amb.epsilon
    u = patch.u[i_row:i_row + 1]
    cc = center_from_states(patch.spine.state(u), u, amb)
    m = cc.m[0]
    d = float(inner(patch.psi[i_row, 0], m, eps))
    return m, d, bool(cc.degenerate[0])


def _orient_ball(m, d, inside_point, eps):
    """Flip (m, d) so the point satisfies <x, m> >= d; for eps = -1 also m4 > 0."""
    if eps == -1:
        if inner(m, m, eps) > 0:
            return m, d, False
        if m[3] < 0:
            m, d = -m, -d
        return m, d, bool(d < -1 and inner(inside_point, m, eps) >= d)
    if inner(inside_point, m, eps) < d:
        m, d = -m, -d
    return m, d, bool(abs(d) < 1)


def build_annulus(sp: SeedParams, u0, amb: Ambient, n_u=41, per_sigma=16, theta=None,
                  theta_tol=THETA_TOL, tol=1e-12, closure_tol=1e-6) -> Annulus:
    """Patch on [-u0, u0] x [0, 2 n sigma] for a seed whose period is m/n."""
    if not u0 > 0:
        raise ValueError("u0 must be positive")
    if theta is None:
        theta = theta_of(sp, amb, tol)
    q = rational_period(theta, theta_tol)
    n = q.denominator
    sg = sigma(sp)
    n_v = 2 * n * per_sigma + 1
    if n_u % 2 == 0:
        n_u += 1
    patch = rebase(integrate_frame(sp, amb, u_max=u0, n_u=n_u, v_max=2 * n * sg, n_v=n_v, tol=tol))
    gap = float(np.max(np.linalg.norm(patch.psi[:, -1] - patch.psi[:, 0], axis=-1)))
    if gap > closure_tol:
        raise SeedDomainError(f"closure gap {gap:.3g} exceeds {closure_tol}")
    if amb.epsilon == 1:
        # place the boundary ball around +e4 so the projection from -e4 is regular
        m, d, _ = _ball_from_row(patch, n_u - 1, amb, None)
        m, d, _ = _orient_ball(m, d, patch.psi[patch.i0, 0], 1)
        if m[3] < 0:
            F = np.diag([1.0, 1.0, 1.0, -1.0])
            patch = patch.transformed(F)
            patch.rebased = True
    return Annulus(sp, amb, float(u0), float(theta), q, sg, patch, gap, per_sigma, patch.L.copy())


# ---------------------------------------------------------------- certification

CERT_TOL = dict(cmc=1e-5, sphere=1e-8, angle=1e-6, containment=1e-8, symmetry=1e-8,
                closure=1e-6, drift=1e-8)


@dataclass
class AnnulusCertificate:
    params: dict
    mode: str
    sphere: dict
    cmc_residual: float
    sphericity: float
    contact: dict
    containment: dict
    symmetry: dict
    embedded: dict
    closure_gap: float
    drift: float
    checks: dict
    tolerances: dict

    @property
    def passed(self):
        return all(self.checks.values())

    def as_dict(self):
        return dict(params=self.params, mode=self.mode, sphere=self.sphere,
                    cmc_residual=self.cmc_residual, sphericity=self.sphericity,
                    contact=self.contact, containment=self.containment, symmetry=self.symmetry,
                    embedded=self.embedded, closure_gap=self.closure_gap, drift=self.drift,
                    checks=self.checks, tolerances=self.tolerances, passed=self.passed)


def _d1(f, h, axis):
    """Fourth-order central first difference (caller trims or wraps the ends)."""
    r = lambda k: np.roll(f, -k, axis=axis)
    return (-r(2) + 8 * r(1) - 8 * r(-1) + r(-2)) / (12.0 * h)


def _d2(f, h, axis):
    r = lambda k: np.roll(f, -k, axis=axis)
    return (-r(2) + 16 * r(1) - 30 * f + 16 * r(-1) - r(-2)) / (12.0 * h * h)


def cmc_residual(patch, amb: Ambient):
    """max |H_fd - H| from finite-difference second derivatives of psi.

    The v-direction is periodic (closing column excluded); the two outer rows
    at each u-end are trimmed.
    """
    P = patch.psi[:, :-1]
    N = patch.N[:, :-1]
    hu = patch.u[1] - patch.u[0]
    hv = patch.v[1] - patch.v[0]
    puu = _d2(P, hu, 0)[2:-2]
    pvv = _d2(P, hv, 1)[2:-2]
    E = np.exp(2.0 * patch.rho[:, :-1]) / (4.0 * amb.mu**2)
    Hn = inner(puu + pvv, N[2:-2], amb.epsilon) / (2.0 * E[2:-2])
    return float(np.max(np.abs(Hn - amb.H)))


def _contact(patch, i_row, m, d, amb: Ambient, outward):
    eps = amb.epsilon
    psi, N = patch.psi[i_row, :-1], patch.N[i_row, :-1]
    nu = outward * patch.psi_u[i_row, :-1]
    nu = nu / np.sqrt(inner(nu, nu, eps))[:, None]
    nhat = m[None, :] - eps * d * psi            # points into the ball
    nhat = nhat / np.sqrt(inner(nhat, nhat, eps))[:, None]
    n_out = -nhat
    cn = inner(N, n_out, eps)
    angle = np.arccos(np.clip(np.abs(cn), 0.0, 1.0))
    conormal = np.arctan2(np.abs(cn), inner(nu, n_out, eps))
    return angle, conormal


def _reflect_x3(P):
    Q = P.copy()
    Q[..., 2] *= -1.0
    return Q


def polar_asymmetry(curve4, n_phi=2048, n_theta=1024):
    """Mirror lines of the central curve about the axis {x1 = x2 = 0}.

    Writes the curve as r(angle) and scans A(phi) = max |r(2 phi - t) - r(t)|.
    Returns (count, minima, amplitude); count is None for a rotational curve.
    """
    x, y = curve4[:, 0], curve4[:, 1]
    ang = np.unwrap(np.arctan2(y, x))
    r = np.hypot(x, y)
    if ang[-1] < ang[0]:
        ang = -ang      # conjugation maps mirror lines at phi to -phi
        flip = True
    else:
        flip = False
    span = ang[-1] - ang[0]
    if np.any(np.diff(ang) <= 0) or abs(span - 2 * np.pi) > 1e-6:
        return None, [], float(np.ptp(r))
    t = ang - ang[0]
    t[-1] = 2 * np.pi
    r = r.copy()
    r[-1] = r[0]
    spl = CubicSpline(t, r, bc_type="periodic")
    amp = float(np.ptp(r))
    if amp < 1e-9 * float(np.mean(r)):
        return float("inf"), [], amp
    ts = np.linspace(0.0, 2 * np.pi, n_theta, endpoint=False)
    rs = spl(ts)

    def A(phi):
        return float(np.max(np.abs(spl(np.mod(2 * phi - ts, 2 * np.pi)) - rs)))

    phis = np.linspace(0.0, np.pi, n_phi, endpoint=False)
    vals = np.array([A(p) for p in phis])
    thr = max(1e-9, 1e-3 * amp)
    dphi = phis[1] - phis[0]
    mins = []
    for i in range(n_phi):
        if vals[i] <= vals[i - 1] and vals[i] <= vals[(i + 1) % n_phi]:
            res = minimize_scalar(A, bounds=(phis[i] - dphi, phis[i] + dphi), method="bounded",
                                  options=dict(xatol=1e-12))
            if res.fun < thr:
                p = res.x + ang[0]
                p = float(np.mod(-p if flip else p, np.pi))
                if all(abs(np.angle(np.exp(2j * (p - q)))) > 4 * dphi for q, _ in mins):
                    mins.append((p, float(res.fun)))
    return len(mins), mins, amp


def rotation_index(patch, amb: Ambient):
    from .spaceform import stereographic_differential
    i0 = patch.i0
    tv = stereographic_differential(patch.psi[i0], patch.psi_v[i0])
    ang = np.unwrap(np.arctan2(tv[:, 1], tv[:, 0]))
    turns = (ang[-1] - ang[0]) / (2 * np.pi)
    return int(round(turns)), float(turns)


def certify(ann: Annulus, mode="free", tolerances=None, embed_strides=(1, 2)) -> AnnulusCertificate:
    """Residual checks of a closed annulus; failures are recorded, not raised."""
    tols = dict(CERT_TOL)
    if tolerances:
        tols.update(tolerances)
    if mode not in ("free", "capillary"):
        raise ValueError("mode must be 'free' or 'capillary'")
    patch, amb = ann.patch, ann.amb
    eps = amb.epsilon
    n_u = len(patch.u)
    i0 = patch.i0
    inside = patch.psi[i0, 0]
    m, d, deg = _ball_from_row(patch, n_u - 1, amb, inside)
    m, d, ball_ok = _orient_ball(m, d, inside, eps)
    rows = {"+": n_u - 1, "-": 0}
    sph = max(float(np.max(np.abs(inner(patch.psi[i], m, eps) - d))) for i in rows.values())

    ang, con = {}, {}
    for key, i in rows.items():
        a_, c_ = _contact(patch, i, m, d, amb, 1.0 if key == "+" else -1.0)
        ang[key], con[key] = a_, c_
    all_ang = np.concatenate([ang["+"], ang["-"]])
    all_con = np.concatenate([con["+"], con["-"]])
    contact = dict(angle_plus=float(np.mean(ang["+"])), angle_minus=float(np.mean(ang["-"])),
                   angle_spread=float(np.ptp(all_ang)),
                   conormal_plus=float(np.mean(con["+"])), conormal_minus=float(np.mean(con["-"])),
                   conormal_spread=float(np.ptp(all_con)),
                   max_dev_right_angle=float(np.max(np.abs(all_ang - np.pi / 2))))

    margin = float(np.min(inner(patch.psi, m, eps) - d)) if ball_ok else float("-inf")
    radius = GeodesicBall(m, d, eps).radius if ball_ok else None
    containment = dict(min_margin=margin, ball_valid=ball_ok, radius=radius,
                       passed=bool(ball_ok and margin >= -tols["containment"]))

    # symmetry: planes P_k through psi_v(0, k sigma), x3-mirror, polar scan
    ps = ann.per_sigma
    n_cols = patch.psi.shape[1] - 1
    P = patch.psi[:, :-1]
    normals, simver = [], 0.0
    for k in range(2 * ann.n):
        jk = k * ps
        nu = patch.psi_v[i0, jk]
        R = reflection(nu, eps)
        j = np.arange(n_cols)
        lhs = P[:, (jk - j) % n_cols]
        rhs = P[:, (jk + j) % n_cols] @ R.T
        simver = max(simver, float(np.max(np.abs(lhs - rhs))))
        normals.append(nu / np.sqrt(inner(nu, nu, eps)))
    distinct = []
    for nu in normals:
        if all(abs(abs(inner(nu, w, eps)) - 1.0) > 1e-9 for w in distinct):
            distinct.append(nu)
    mirror = float(np.max(np.abs(P[::-1] - _reflect_x3(P))))
    count, mins, amp = polar_asymmetry(patch.psi[i0])
    idx, turns = rotation_index(patch, amb)
    planar = stereographic(patch.psi[i0, :-1], eps, tol=1e-7)[:, :2]
    simple = closed_loop_simple(planar)
    rotational = count == float("inf")
    n_planes = len(distinct)
    # mirror lines from the scan against the lines of the planes P_k
    lines = [float(np.mod(np.arctan2(w[1], w[0]) + np.pi / 2, np.pi)) for w in distinct]
    mismatch = None
    if isinstance(count, int) and count > 0:
        mismatch = max(min(abs(np.angle(np.exp(2j * (p - q)))) / 2 for q in lines)
                       for p, _ in mins)
    symmetry = dict(simver_residual=simver, distinct_planes=n_planes, mirror_residual=mirror,
                    scan_planes=count, scan_minima=[list(x) for x in mins], polar_amplitude=amp,
                    rotational=rotational, scan_plane_mismatch=mismatch,
                    rotation_index=idx, turns=turns,
                    central_curve_simple=bool(simple),
                    order=(None if rotational or count is None else 4 * count))

    emb = {}
    for s in embed_strides:
        if (n_u - 1) % s or n_cols % s:
            continue
        mesh = ann.mesh(stride=s)
        hits = self_intersections(mesh)
        emb[f"stride_{s}"] = dict(n_faces=mesh.n_faces, intersections=int(len(hits)))
    embedded = dict(levels=emb, passed=bool(len(emb) >= 2 and all(v["intersections"] == 0
                                                                   for v in emb.values())))

    cmc = cmc_residual(patch, amb)
    drift = patch.max_drift()
    checks = dict(cmc=cmc <= tols["cmc"], sphere=sph <= tols["sphere"],
                  containment=containment["passed"], closure=ann.closure_gap <= tols["closure"],
                  drift=drift <= tols["drift"],
                  symmetry=bool(simver <= tols["symmetry"] and mirror <= tols["symmetry"]
                                and n_planes == ann.n
                                and (rotational or (count == n_planes and mismatch is not None
                                                    and mismatch < 1e-6))),
                  embedded=embedded["passed"])
    if mode == "free":
        checks["contact"] = contact["max_dev_right_angle"] <= tols["angle"]
    else:
        checks["contact"] = (contact["angle_spread"] <= tols["angle"]
                             and contact["conormal_spread"] <= tols["angle"])
    params = dict(a=ann.sp.a, b=ann.sp.b, c=ann.sp.c, u0=ann.u0, n=ann.n, m=ann.m,
                  theta=ann.theta, sigma=ann.sigma, epsilon=eps, H=amb.H)
    sphere = dict(m=[float(x) for x in m], d=float(d), degenerate=deg)
    return AnnulusCertificate(params, mode, sphere, cmc, sph, contact, containment, symmetry,
                              embedded, ann.closure_gap, drift, checks, tols)


def free_boundary_member(sp: SeedParams, amb: Ambient, **kw):
    """Annulus cut at tau together with its free boundary certificate."""
    traj = integrate_hamiltonian(sp, 4.0)
    tau = find_tau(traj, sp)
    ann = build_annulus(sp, tau, amb, **kw)
    return ann, certify(ann, "free")


# ---------------------------------------------------------------- rotational pieces

@dataclass
class RotationalAnnulus:
    H: float
    delta: float
    amb: Ambient
    s_tilde: float
    s: np.ndarray
    t: np.ndarray
    psi: np.ndarray        # (n_s, n_t, 4), t = 2 pi column dropped
    ball: GeodesicBall
    F_at_root: float
    angle: float
    torus: bool

    def mesh(self, stride=1):
        P = stereographic(self.psi[::stride, ::stride], self.amb.epsilon, tol=1e-7)
        return grid_mesh(P)


def rotational_annulus(H, delta, amb: Ambient, n_s=41, n_t=128, s_max=12.0) -> RotationalAnnulus:
    """Compact Delaunay piece over [-s~, s~] with its ball B[e4, eps x4(s~)]."""
    if delta == 0:
        raise RegimeError("delta must be non-zero")
    prof = integrate_profile(H, delta, amb, s_max=s_max)
    fb = find_stilde(prof)
    s = np.linspace(-fb.s_tilde, fb.s_tilde, n_s)
    t = np.linspace(0.0, 2 * np.pi, n_t + 1)[:-1]
    psi = prof.embedding(s[:, None], t[None, :])
    ang = float(contact_angle(prof, fb)[0])
    return RotationalAnnulus(H, delta, amb, fb.s_tilde, s, t, psi, fb.ball, fb.F_at_root, ang,
                             prof.torus)


def certify_rotational(rot: RotationalAnnulus, tolerances=None):
    tols = dict(CERT_TOL)
    if tolerances:
        tols.update(tolerances)
    eps = rot.amb.epsilon
    margin = float(np.min(inner(rot.psi, rot.ball.center, eps) - rot.ball.d))
    bd = np.concatenate([rot.psi[0], rot.psi[-1]])
    sph = float(np.max(np.abs(inner(bd, rot.ball.center, eps) - rot.ball.d)))
    emb = {}
    for s in (1, 2):
        mesh = rot.mesh(stride=s)
        emb[f"stride_{s}"] = dict(n_faces=mesh.n_faces,
                                  intersections=int(len(self_intersections(mesh))))
    checks = dict(F_root=abs(rot.F_at_root) <= 1e-10,
                  contact=abs(rot.angle - np.pi / 2) <= tols["angle"],
                  containment=margin >= -tols["containment"],
                  sphere=sph <= tols["sphere"],
                  embedded=all(v["intersections"] == 0 for v in emb.values()))
    return dict(params=dict(H=rot.H, delta=rot.delta, epsilon=eps, s_tilde=rot.s_tilde,
                            torus=rot.torus),
                F_at_root=rot.F_at_root, angle=rot.angle, containment_margin=margin,
                sphericity=sph, ball=dict(center=rot.ball.center.tolist(), d=rot.ball.d,
                                          radius=rot.ball.radius),
                embedded=emb, checks=checks, passed=all(checks.values()), tolerances=tols)


# ---------------------------------------------------------------- capillary branch

@dataclass
class CapillaryFamily:
    n: int
    amb: Ambient
    branch: str              # 'flat torus' or 'free boundary seed'
    seed: tuple              # (1, b, c)
    seed_u0: float
    members: list            # dicts with a, b, c, u_star, m3, slope
    u_bar: float | None = None


def torus_seed(n, amb: Ambient):
    """Point of {Theta(1, b, c) = -1/n} on the line r3 = 1 (so c = 1)."""
    t2 = 1.0 / (n * n)
    H, mu = amb.H, amb.mu
    r = (1.0 - t2 - (H + mu) / (2.0 * mu)) / t2
    if not r > 0:
        raise SeedDomainError("level line does not meet r3 = 1 at r > 0")
    r1, r3 = upsilon_line(-1.0 / n, r, amb)
    b, _ = bc_from_r(r1, 1.0)
    return float(r), (1.0, b, 1.0)


def capillary_family(n, amb: Ambient, a_values=(1.05,), second=None, tol=1e-12):
    """Capillary annuli cut at the first zero u* of m3 on the level Theta = -1/n.

    a_values are the a-coordinates of the members; second fixes the other
    free coordinate (c on the torus branch, b on the free boundary branch)
    and defaults to the seed's value.
    """
    if amb.epsilon != 1:
        raise RegimeError("capillary families are built in S^3")
    if n < 2:
        raise ValueError("n must be at least 2")
    t0 = -1.0 / n
    branch = "flat torus" if periodon(n, amb) == "fails" else "free boundary seed"
    members = []
    if branch == "flat torus":
        _, seed = torus_seed(n, amb)
        u_bar = float(np.sqrt(2 * amb.mu / (amb.mu + amb.H)) * np.pi)
        us, m3, slope = find_ustar(SeedParams(*seed), amb, (1e-6, u_bar), tol=tol)
        c_fix = 1.0 if second is None else float(second)
        for a in a_values:
            b = seed[1] if a == 1.0 and c_fix == 1.0 else level_b(a, c_fix, t0, amb, b0=seed[1], tol=tol)
            sp = SeedParams(a, b, c_fix)
            u, m3a, sl = find_ustar(sp, amb, (1e-6, u_bar), tol=tol)
            members.append(dict(a=a, b=b, c=c_fix, u_star=u, m3=m3a, slope=sl))
        return CapillaryFamily(n, amb, branch, seed, us, members, u_bar)
    sw = sweep_upsilon(Fraction(-1, n), amb)
    seed = sw.seed
    sp0 = SeedParams(*seed)
    tau = find_tau(integrate_hamiltonian(sp0, 4.0), sp0)
    lo, hi = 0.5 * tau, 1.5 * tau
    us, _, _ = find_ustar(sp0, amb, (lo, hi), tol=tol)
    b_fix = seed[1] if second is None else float(second)
    for a in a_values:
        c = level_c(a, b_fix, t0, amb, c0=seed[2], tol=tol)
        sp = SeedParams(a, b_fix, c)
        u, m3a, sl = find_ustar(sp, amb, (lo, hi), tol=tol)
        members.append(dict(a=a, b=b_fix, c=c, u_star=u, m3=m3a, slope=sl))
    return CapillaryFamily(n, amb, branch, seed, us, members, None)


# ---------------------------------------------------------------- rotational agreement

def compare_with_delaunay(sp: SeedParams, amb: Ambient, u_max=0.6, n_u=41, n_v=81, tol=1e-12):
    """Pointwise distance between the frame surface of a rotational seed (a = 1)
    and the Delaunay embedding psi_D(s(u), v/(2 sqrt(mu delta))) after the rigid
    motion that matches the two frames at the origin.

    Returns dict(max_error, radius_error, isometry_defect, signs).
    """
    from .rotational import arclength_map, matched_delta
    if sp.a != 1.0:
        raise SeedDomainError("comparison needs a rotational seed (a = 1)")
    eps, mu = amb.epsilon, amb.mu
    delta = matched_delta(sp.c, amb)
    patch = integrate_frame(sp, amb, u_max=u_max, n_u=n_u, v_max=2.0 * sigma(sp), n_v=n_v, tol=tol)
    am = arclength_map(sp.c, amb, u_max=max(4.0, 2 * u_max))
    s = am.s_of_u(patch.u)
    prof = integrate_profile(amb.H, delta, amb, s_max=float(np.max(np.abs(s))) * 1.1 + 0.1)
    # radius law x(s(u)) = sqrt(delta/mu) exp(rho(u, 0))
    x = prof.state(s)[0]
    rad_err = float(np.max(np.abs(x - np.sqrt(delta / mu) * np.exp(patch.rho[:, 0]))))
    i0 = patch.i0
    F1 = np.stack([patch.psi[i0, 0], patch.psi_u[i0, 0], patch.psi_v[i0, 0], patch.N[i0, 0]], axis=1)
    scale = np.sqrt(inner(patch.psi_u[i0, 0], patch.psi_u[i0, 0], eps))
    F1[:, 1:3] /= scale
    psiD, psD, ptD, nD = (w[0] for w in prof.frame(np.array([0.0])))
    G = np.diag([1.0, 1.0, 1.0, float(eps)])
    best = None
    for ss in (1, -1):
        for st in (1, -1):
            for sn in (1, -1):
                F2 = np.stack([psiD, ss * psD / np.sqrt(inner(psD, psD, eps)), st * ptD, sn * nD], axis=1)
                Lm = F2 @ np.linalg.inv(F1)
                t = st * patch.v / (2.0 * np.sqrt(mu * delta))
                P = prof.embedding((ss * s)[:, None], t[None, :])
                # the profile meridian is at t = 0 with psi_t along -e2
                Q = patch.psi @ Lm.T
                err = float(np.max(np.linalg.norm(Q - P, axis=-1)))
                if best is None or err < best[0]:
                    best = (err, Lm, (ss, st, sn))
    err, Lm, signs = best
    defect = float(np.max(np.abs(Lm.T @ G @ Lm - G)))
    return dict(max_error=err, radius_error=rad_err, isometry_defect=defect, signs=signs,
                delta=delta)
