"""Immersion of the CMC surface from a seed via the Gauss-Weingarten system.

The v = 0 line (the "spine") is integrated in u together with the (y, z)
system and rho; every v-line is then integrated from the spine, carrying rho
through the restriction of the sinh-Gordon equation to v-lines.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .sinh_system import SeedParams, SeedDomainError, find_tau, integrate_hamiltonian
from .spaceform import Ambient, E1, E2, E3, E4, inner

DRIFT_ABORT = 1e-5


def initial_frame(sp: SeedParams, amb: Ambient):
    """(psi, psi_u, psi_v, N) at (0, 0) before rebasing."""
    s = np.exp(sp.rho00) / (2.0 * amb.mu)
    return E4.copy(), s * E3, -s * E2, E1.copy()


# ---------------------------------------------------------------- spine (v = 0)

def _spine_rhs(sp: SeedParams, amb: Ambient):
    ah, H, mu, eps = sp.a_hat, amb.H, amb.mu, amb.epsilon
    m2 = 4.0 * mu * mu

    def rhs(_, w):
        y, z, yp, zp, r = w[:5]
        psi, pu, pv, N = w[5:9], w[9:13], w[13:17], w[17:21]
        d = y * y - z * z
        e2 = np.exp(2.0 * r)
        ru = y * np.cosh(r) + z * np.sinh(r)
        out = np.empty(21)
        out[0], out[1] = yp, zp
        out[2] = (ah - 1.0) * y - 2.0 * y * d
        out[3] = ah * z - 2.0 * z * d
        out[4] = ru
        out[5:9] = pu
        out[9:13] = ru * pu + (H * e2 + mu) / m2 * N - eps * e2 / m2 * psi
        out[13:17] = ru * pv
        out[17:21] = -(H + mu / e2) * pu
        return out
    return rhs


def spine_initial_state(sp: SeedParams, amb: Ambient):
    psi, pu, pv, N = initial_frame(sp, amb)
    return np.concatenate([[0.0, 0.0, sp.yp0, sp.zp0, sp.rho00], psi, pu, pv, N])


@dataclass
class Spine:
    """Dense v = 0 line on [u_lo, u_hi] (u_lo <= 0 <= u_hi)."""

    sp: SeedParams
    amb: Ambient
    u_lo: float
    u_hi: float
    sol_pos: object = field(repr=False)
    sol_neg: object = field(repr=False, default=None)
    L: np.ndarray = field(default_factory=lambda: np.eye(4))

    def state(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        out = np.empty((21, len(u)))
        pos = u >= 0
        if np.any(pos):
            out[:, pos] = self.sol_pos(u[pos])
        if np.any(~pos):
            if self.sol_neg is None:
                raise ValueError("negative u not integrated")
            out[:, ~pos] = self.sol_neg(u[~pos])
        # apply the rebasing isometry to the four frame vectors
        for j in range(4):
            sl = slice(5 + 4 * j, 9 + 4 * j)
            out[sl] = self.L @ out[sl]
        return out


def integrate_spine(sp: SeedParams, amb: Ambient, u_hi, u_lo=0.0, tol=1e-12) -> Spine:
    rhs = _spine_rhs(sp, amb)
    w0 = spine_initial_state(sp, amb)
    kw = dict(method="DOP853", rtol=tol, atol=tol * 1e-2, dense_output=True)
    pos = solve_ivp(rhs, (0.0, max(u_hi, 1e-12)), w0, **kw)
    if not pos.success:
        raise RuntimeError(pos.message)
    neg = None
    if u_lo < 0:
        neg = solve_ivp(rhs, (0.0, u_lo), w0, **kw)
        if not neg.success:
            raise RuntimeError(neg.message)
        neg = neg.sol
    return Spine(sp, amb, float(u_lo), float(u_hi), pos.sol, neg)


# ---------------------------------------------------------------- v-lines

def _vline_rhs(amb: Ambient, y, z, yp, zp):
    H, mu, eps = amb.H, amb.mu, amb.epsilon
    m2 = 4.0 * mu * mu
    n = len(y)

    def rhs(_, wf):
        w = wf.reshape(n, 18)
        r, rv = w[:, 0], w[:, 1]
        psi, pu, pv, N = w[:, 2:6], w[:, 6:10], w[:, 10:14], w[:, 14:18]
        ch, sh = np.cosh(r), np.sinh(r)
        ru = y * ch + z * sh
        ruu = yp * ch + zp * sh + (y * sh + z * ch) * ru
        e2 = np.exp(2.0 * r)
        out = np.empty_like(w)
        out[:, 0] = rv
        out[:, 1] = -ruu - ch * sh
        out[:, 2:6] = pv
        out[:, 6:10] = rv[:, None] * pu + ru[:, None] * pv
        out[:, 10:14] = (-ru[:, None] * pu + rv[:, None] * pv
                         + ((H * e2 - mu) / m2)[:, None] * N - (eps * e2 / m2)[:, None] * psi)
        out[:, 14:18] = -(H - mu / e2)[:, None] * pv
        return out.ravel()
    return rhs


def integrate_vlines(spine_states, amb: Ambient, v, tol=1e-12, dense=False):
    """Integrate all v-lines starting from spine states (21, n_u) at v = 0."""
    st = np.asarray(spine_states)
    y, z, yp, zp, r = st[0], st[1], st[2], st[3], st[4]
    n = st.shape[1]
    w0 = np.zeros((n, 18))
    w0[:, 0] = r
    w0[:, 2:18] = st[5:21].T
    rhs = _vline_rhs(amb, y, z, yp, zp)
    v = np.asarray(v, dtype=float)
    sol = solve_ivp(rhs, (0.0, float(v[-1])), w0.ravel(), method="DOP853", rtol=tol,
                    atol=tol * 1e-2, t_eval=v, dense_output=dense)
    if not sol.success:
        raise RuntimeError(sol.message)
    out = sol.y.reshape(n, 18, len(v))
    return (out, sol.sol) if dense else out


# ---------------------------------------------------------------- patch

@dataclass
class SurfacePatch:
    sp: SeedParams
    amb: Ambient
    u: np.ndarray
    v: np.ndarray
    psi: np.ndarray     # (n_u, n_v, 4)
    psi_u: np.ndarray
    psi_v: np.ndarray
    N: np.ndarray
    rho: np.ndarray     # (n_u, n_v)
    rho_v: np.ndarray
    yz: np.ndarray      # (4, n_u): y, z, y', z'
    spine: Spine = field(repr=False)
    rebased: bool = False
    L: np.ndarray = field(default_factory=lambda: np.eye(4))

    @property
    def rho_u(self):
        y, z = self.yz[0][:, None], self.yz[1][:, None]
        return y * np.cosh(self.rho) + z * np.sinh(self.rho)

    @property
    def i0(self):
        """Index of the u = 0 row."""
        i = int(np.argmin(np.abs(self.u)))
        if abs(self.u[i]) > 1e-14:
            raise ValueError("patch has no u = 0 line")
        return i

    def gram_residuals(self):
        eps, mu = self.amb.epsilon, self.amb.mu
        g = np.exp(2.0 * self.rho) / (4.0 * mu * mu)
        ip = lambda p, q: inner(p, q, eps)
        res = {
            "psi.psi": ip(self.psi, self.psi) - eps,
            "N.N": ip(self.N, self.N) - 1.0,
            "psi.N": ip(self.psi, self.N),
            "psi_u.psi_v": ip(self.psi_u, self.psi_v),
            "psi_u.psi_u": ip(self.psi_u, self.psi_u) - g,
            "psi_v.psi_v": ip(self.psi_v, self.psi_v) - g,
            "psi.psi_u": ip(self.psi, self.psi_u),
            "psi.psi_v": ip(self.psi, self.psi_v),
            "N.psi_u": ip(self.N, self.psi_u),
            "N.psi_v": ip(self.N, self.psi_v),
        }
        return {k: float(np.max(np.abs(v))) for k, v in res.items()}

    def max_drift(self):
        return max(self.gram_residuals().values())

    def transformed(self, L):
        f = lambda a: a @ L.T
        spine = replace(self.spine, L=L @ self.spine.L)
        return replace(self, psi=f(self.psi), psi_u=f(self.psi_u), psi_v=f(self.psi_v),
                       N=f(self.N), spine=spine, L=L @ self.L)


def integrate_frame(sp: SeedParams, amb: Ambient, u_max, n_u=101, v_max=None, n_v=201,
                    tol=1e-12, u_min=None, check=True) -> SurfacePatch:
    """Frame on [u_min, u_max] x [0, v_max]; u_min defaults to -u_max.

    v_max defaults to 2 sigma.
    """
    from .sinh_system import sigma
    if v_max is None:
        v_max = 2.0 * sigma(sp)
    u_min = -u_max if u_min is None else u_min
    u = np.linspace(u_min, u_max, n_u)
    v = np.linspace(0.0, v_max, n_v)
    spine = integrate_spine(sp, amb, u_hi=max(u_max, 0.0), u_lo=min(u_min, 0.0), tol=tol)
    st = spine.state(u)
    w = integrate_vlines(st, amb, v, tol=tol)
    tr = lambda a: np.transpose(a, (0, 2, 1))
    patch = SurfacePatch(sp, amb, u, v, tr(w[:, 2:6]), tr(w[:, 6:10]), tr(w[:, 10:14]),
                         tr(w[:, 14:18]), w[:, 0, :], w[:, 1, :], st[:4].copy(), spine)
    if check:
        drift = patch.max_drift()
        if drift > DRIFT_ABORT:
            raise RuntimeError(f"frame drift {drift:.3g} exceeds {DRIFT_ABORT}")
    return patch


# ---------------------------------------------------------------- center curve

def _mtilde_from_state(st, amb: Ambient, deriv=False):
    """m~ (and optionally m~') from spine states (21, n)."""
    H, mu, eps = amb.H, amb.mu, amb.epsilon
    y, z, yp, zp, r = st[0], st[1], st[2], st[3], st[4]
    psi, pu, N = st[5:9], st[9:13], st[17:21]
    er = np.exp(-r)
    beta = (y - z) / (2.0 * mu)
    gam = (mu * (y + z) + H * (y - z)) / (2.0 * mu)
    mt = er * pu - beta * N - gam * psi
    if not deriv:
        return mt
    e2 = np.exp(2.0 * r)
    m2 = 4.0 * mu * mu
    ru = y * np.cosh(r) + z * np.sinh(r)
    puu = ru * pu + (H * e2 + mu) / m2 * N - eps * e2 / m2 * psi
    Nu = -(H + mu / e2) * pu
    betap = (yp - zp) / (2.0 * mu)
    gamp = (mu * (yp + zp) + H * (yp - zp)) / (2.0 * mu)
    mtp = er * (puu - ru * pu) - betap * N - beta * Nu - gamp * psi - gam * pu
    return mt, mtp


def mtilde_coefficient(st, sp: SeedParams, amb: Ambient):
    y, z = st[0], st[1]
    return sp.a_hat - (amb.H + amb.mu) / (2.0 * amb.mu) - 2.0 * y * y + 2.0 * z * z


@dataclass
class CenterCurve:
    u: np.ndarray
    mtilde: np.ndarray   # (n, 4)
    m: np.ndarray        # (n, 4)
    norm_sign: np.ndarray  # sign of <m~, m~>
    d: np.ndarray
    theta: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    degenerate: np.ndarray  # True where <m~,m~> is too close to 0 to normalise


def center_from_states(st, u, amb: Ambient, orient=1.0):
    eps, mu = amb.epsilon, amb.mu
    mt = _mtilde_from_state(st, amb)
    nn = inner(mt.T, mt.T, eps)
    degenerate = np.abs(nn) < 1e-12
    scale = np.where(degenerate, np.nan, 1.0 / np.sqrt(np.abs(nn)))
    m = orient * (mt * scale).T
    psi, pu, N = st[5:9].T, st[9:13].T, st[17:21].T
    d = inner(psi, m, eps)
    Nhat = m - eps * d[:, None] * psi
    nN = np.sqrt(inner(m, m, eps) - eps * d * d)
    cos_t = inner(N, Nhat, eps) / nN
    ew = np.exp(st[4]) / (2.0 * mu)
    sin_t = inner(m, pu, eps) / (ew * nN)
    theta = np.arctan2(sin_t, cos_t)
    y, z = st[0], st[1]
    return CenterCurve(np.asarray(u), mt.T, m, np.sign(nn), d, theta, 2.0 * mu * (y + z),
                       (y - z) / (2.0 * mu), degenerate)


def center_curve(patch: SurfacePatch) -> CenterCurve:
    """Center of the umbilic leaf containing each v-line, along the patch's u grid.

    Sign convention: m is a positive multiple of m~, so m3(0) > 0.
    """
    st = patch.spine.state(patch.u)
    return center_from_states(st, patch.u, patch.amb)


# ---------------------------------------------------------------- symmetry planes

@dataclass
class SymmetryData:
    nu: np.ndarray          # (k_max+1, 4)
    gram01: np.ndarray
    in_O_minus: bool
    angles: np.ndarray      # angle between consecutive nu_k

    def plane_normal(self, k):
        return self.nu[k]


def _angle(p, q, eps):
    c = inner(p, q, eps) / np.sqrt(inner(p, p, eps) * inner(q, q, eps))
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def central_line(sp: SeedParams, amb: Ambient, v, tol=1e-12, L=None):
    """Frame along the u = 0 v-line: arrays (n_v, 4) for psi, psi_v and the rho profile."""
    st = spine_initial_state(sp, amb)[:, None]
    w = integrate_vlines(st, amb, v, tol=tol)[0]
    L = np.eye(4) if L is None else L
    out = {k: (L @ w[sl]).T for k, sl in (("psi", slice(2, 6)), ("psi_u", slice(6, 10)),
                                          ("psi_v", slice(10, 14)), ("N", slice(14, 18)))}
    out["rho"], out["rho_v"] = w[0], w[1]
    return out


def symmetry_planes(sp: SeedParams, amb: Ambient, sig, k_max=2, L=None, tol=1e-12) -> SymmetryData:
    v = sig * np.arange(k_max + 1)
    if k_max == 0:
        v = np.array([0.0, 1e-300])
    line = central_line(sp, amb, v, tol=tol, L=L)
    nu = line["psi_v"][: k_max + 1]
    eps = amb.epsilon
    G = np.array([[inner(nu[i], nu[j], eps) for j in range(2)] for i in range(2)]) if k_max >= 1 else None
    flag = bool(G is not None and G[0, 0] * G[1, 1] - G[0, 1] ** 2 > 0)
    ang = np.array([_angle(nu[k], nu[k + 1], eps) for k in range(k_max)])
    return SymmetryData(nu, G, flag, ang)


def reflection(normal, eps):
    """Reflection of R^4_eps across the hyperplane orthogonal to a spacelike normal."""
    n = np.asarray(normal, dtype=float)
    G = np.diag([1.0, 1.0, 1.0, float(eps)])
    nn = inner(n, n, eps)
    return np.eye(4) - 2.0 * np.outer(n, G @ n) / nn


# ---------------------------------------------------------------- rebasing

def rebasing_isometry(sp: SeedParams, amb: Ambient, L0=None):
    """Isometry fixing e2, e3 with span{m~(0), m~'(0)} -> {x1 = x2 = 0}."""
    eps = amb.epsilon
    st = spine_initial_state(sp, amb)[:, None].copy()
    if L0 is not None:
        for j in range(4):
            st[5 + 4 * j: 9 + 4 * j] = L0 @ st[5 + 4 * j: 9 + 4 * j]
    mt, mtp = _mtilde_from_state(st, amb, deriv=True)
    mt, mtp = mt[:, 0], mtp[:, 0]
    e3 = mt / np.sqrt(inner(mt, mt, eps))
    w = mtp - inner(mtp, e3, eps) * e3
    if abs(w[1]) > 1e-9 * max(1.0, np.max(np.abs(w))):
        raise RuntimeError("center plane is not orthogonal to e2")
    ww = inner(w, w, eps)
    if ww * eps <= 1e-14:
        raise RuntimeError("center plane has the wrong causal type for rebasing")
    n = w / np.sqrt(abs(ww))
    if n[3] < 0:
        n = -n
    e = np.array([n[3], 0.0, 0.0, -eps * n[0]])
    G = np.diag([1.0, 1.0, 1.0, float(eps)])
    L = np.vstack([e @ G, E2, E3, eps * (n @ G)])
    return L


def rebase(patch: SurfacePatch) -> SurfacePatch:
    L = rebasing_isometry(patch.sp, patch.amb, L0=patch.L)
    out = patch.transformed(L)
    out.rebased = True
    return out


def is_isometry(L, eps, tol=1e-12):
    G = np.diag([1.0, 1.0, 1.0, float(eps)])
    return bool(np.max(np.abs(L.T @ G @ L - G)) <= tol)


# ---------------------------------------------------------------- h and u*

def h_frak_details(sp: SeedParams, amb: Ambient, tol=1e-12):
    """tau and the normalised center at tau, oriented toward the ball."""
    traj = integrate_hamiltonian(sp, 4.0, tol)
    tau = find_tau(traj, sp)
    spine = integrate_spine(sp, amb, u_hi=tau, tol=tol)
    st = spine.state(np.array([tau]))
    # <m~, psi_u> > 0 always; the ball center lies on the opposite side
    cc = center_from_states(st, np.array([tau]), amb, orient=-1.0)
    return tau, cc


def h_frak(sp: SeedParams, amb: Ambient, tol=1e-12) -> float:
    """x3-coordinate of the unit center of the umbilic leaf through u = tau.

    The center is taken on the ball side (<m, psi_u(tau)> < 0), so h > 0 when
    the sphere is centered above the symmetry plane x3 = 0.
    """
    _, cc = h_frak_details(sp, amb, tol)
    if cc.degenerate[0]:
        raise RuntimeError("umbilic leaf at tau is a horosphere; h is undefined")
    return float(cc.m[0, 2])


def m3_function(sp: SeedParams, amb: Ambient, u_hi, tol=1e-12):
    """u -> m3(u) with the m3(0) = +1 convention, on [0, u_hi]."""
    spine = integrate_spine(sp, amb, u_hi=u_hi, tol=tol)

    def m3(u):
        u = np.atleast_1d(u)
        cc = center_from_states(spine.state(u), u, amb)
        return cc.m[:, 2]
    return m3, spine


def find_ustar(sp: SeedParams, amb: Ambient, bracket, tol=1e-12, step=1e-2):
    """First root of m3 in the bracket, with a non-zero slope check.

    The zeros of m3 are those of m~3, which is smooth even where the
    normalisation degenerates, so the refinement runs on m~3.
    """
    lo, hi = bracket
    if lo < 0 or hi <= lo:
        raise ValueError("bracket must satisfy 0 <= lo < hi")
    spine = integrate_spine(sp, amb, u_hi=hi, tol=tol)
    f = lambda u: _mtilde_from_state(spine.state(np.atleast_1d(u)), amb)[2]
    n = max(3, int(np.ceil((hi - lo) / step)) + 1)
    grid = np.linspace(lo, hi, n)
    vals = f(grid)
    idx = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)
    if len(idx) == 0:
        raise SeedDomainError("no sign change of m3 in the bracket")
    i = idx[0]
    us = brentq(lambda s: float(f(s)[0]), grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15)
    cc = center_from_states(spine.state(np.array([us])), np.array([us]), amb)
    hstep = 1e-5
    slope = (f(us + hstep)[0] - f(us - hstep)[0]) / (2 * hstep)
    if slope == 0:
        raise RuntimeError("m3 has a degenerate zero")
    return float(us), float(cc.m[0, 2]), float(slope)
