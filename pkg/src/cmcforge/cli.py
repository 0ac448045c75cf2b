"""forge: command-line driver for the free boundary and capillary constructions.

    forge rotational|sweep|family|capillary|verify --config run.json --out DIR
          [--theta m/n] [--H h] [--eps +-1] [--tol t]

Reports are deterministic (sorted keys, no wall-clock data); stage timings
go to a separate timings.json.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import search
from .mesh import read_obj, read_ply, read_sidecar, self_intersections, write_obj, write_ply, write_sidecar
from .rotational import RegimeError, matched_delta
from .sinh_system import SeedDomainError, SeedParams, find_tau, integrate_hamiltonian
from .spaceform import Ambient, inner, inverse_stereographic

log = logging.getLogger("forge")

MODES = ("rotational", "sweep", "family", "capillary", "verify")

DEFAULTS = {
    "ambient": {"epsilon": -1, "H": 1.5},
    "theta": "-1/2",
    "thetas": None,
    "tolerances": {"ode_tol": 1e-12, "root_tol": 1e-8, "cert": dict(search.CERT_TOL)},
    "grid": {"n_u": 41, "per_sigma": 16, "n_s": 41, "n_t": 128},
    "rotational": {"delta": None, "c": None},
    "family": {"eta_max": 0.02, "step": 5e-3},
    "capillary": {"n": None, "a_values": [1.05], "second": None},
    "verify": {"mesh": None, "recut_factor": None},
}


class ConfigError(ValueError):
    pass


def parse_theta(s) -> Fraction:
    try:
        q = Fraction(str(s))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad theta {s!r}") from exc
    if isinstance(s, str) and "/" in s:
        num, den = (int(x) for x in s.split("/"))
        if math.gcd(num, den) != 1:
            raise ConfigError(f"theta {s} is not irreducible")
    if not (q.numerator < 0 < q.denominator):
        raise ConfigError("theta must be m/n with m < 0 < n")
    return q


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    mode: str
    doc: dict
    out: Path
    source: str | None = None
    amb: Ambient = field(init=False)
    theta: Fraction = field(init=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        a = self.doc["ambient"]
        try:
            self.amb = Ambient(int(a["epsilon"]), float(a["H"]))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        self.theta = parse_theta(self.doc["theta"])
        tt = self.doc["tolerances"]
        vals = [tt["ode_tol"], tt["root_tol"], *tt["cert"].values()]
        if any(not (isinstance(v, (int, float)) and v > 0) for v in vals):
            raise ConfigError("tolerances must be positive")

    @property
    def ode_tol(self):
        return float(self.doc["tolerances"]["ode_tol"])

    @property
    def cert_tol(self):
        return dict(self.doc["tolerances"]["cert"])


def load_config(mode, path=None, overrides=None, out=".") -> RunConfig:
    user = {}
    if path:
        with open(path) as fh:
            user = json.load(fh)
    doc = _merge(DEFAULTS, user)
    ov = overrides or {}
    if ov.get("theta") is not None:
        doc["theta"] = ov["theta"]
        doc["thetas"] = None
    if ov.get("H") is not None:
        doc["ambient"]["H"] = ov["H"]
    if ov.get("eps") is not None:
        doc["ambient"]["epsilon"] = ov["eps"]
    if ov.get("tol") is not None:
        doc["tolerances"]["ode_tol"] = ov["tol"]
    return RunConfig(mode, doc, Path(out), str(path) if path else None)


# ---------------------------------------------------------------- output helpers

def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    return x


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(_clean(doc), fh, indent=1, sort_keys=True)
        fh.write("\n")


def _g17(x):
    return f"{float(x):.17g}"


class Timer:
    def __init__(self):
        self.stages = {}

    def __call__(self, name):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                timer.stages[name] = timer.stages.get(name, 0.0) + time.perf_counter() - self.t
        return _Ctx()


def _emit_mesh(out: Path, name, mesh, sidecar):
    write_obj(out / f"{name}.obj", mesh, header=[f"forge mesh {name}"])
    write_ply(out / f"{name}.ply", mesh)
    write_sidecar(out / f"{name}.json", mesh, _clean(sidecar))
    return dict(obj=f"{name}.obj", ply=f"{name}.ply", sidecar=f"{name}.json")


def _annulus_sidecar(ann, cert, cfg: RunConfig, mode):
    return dict(kind="annulus", mode=mode,
                params=dict(a=ann.sp.a, b=ann.sp.b, c=ann.sp.c, u0=ann.u0, epsilon=ann.amb.epsilon,
                            H=ann.amb.H, theta=ann.theta, m=ann.m, n=ann.n,
                            n_u=len(ann.patch.u), per_sigma=ann.per_sigma, ode_tol=cfg.ode_tol),
                ball=dict(m=cert.sphere["m"], d=cert.sphere["d"]),
                isometry=ann.isometry, checks=cert.checks)


def _build_cert(sp, u0, cfg: RunConfig, mode):
    g = cfg.doc["grid"]
    ann = search.build_annulus(sp, u0, cfg.amb, n_u=int(g["n_u"]), per_sigma=int(g["per_sigma"]),
                               tol=cfg.ode_tol)
    return ann, search.certify(ann, mode, tolerances=cfg.cert_tol)


# ---------------------------------------------------------------- commands

def cmd_rotational(cfg: RunConfig, timer):
    amb, r = cfg.amb, cfg.doc["rotational"]
    if r.get("delta") is None and r.get("c") is None:
        raise ConfigError("rotational mode needs rotational.delta or rotational.c")
    delta = float(r["delta"]) if r.get("delta") is not None else matched_delta(float(r["c"]), amb)
    if delta == 0:
        raise RegimeError("delta must be non-zero")
    g = cfg.doc["grid"]
    with timer("rotational"):
        rot = search.rotational_annulus(amb.H, delta, amb, n_s=int(g["n_s"]), n_t=int(g["n_t"]))
        cert = search.certify_rotational(rot, cfg.cert_tol)
    side = dict(kind="rotational", params=dict(H=amb.H, delta=delta, epsilon=amb.epsilon,
                                                n_s=int(g["n_s"]), n_t=int(g["n_t"])),
                ball=dict(m=rot.ball.center, d=rot.ball.d), checks=cert["checks"])
    files = _emit_mesh(cfg.out, "rotational", rot.mesh(), side)
    return dict(certificates=[cert], meshes=[files]), cert["passed"]


def _sweep_report(sw):
    return dict(theta0=sw.theta0, r_star=sw.r_star, f_star=sw.f_star, bracket=sw.bracket,
                seed=sw.seed, h_step=sw.h_step, f_check=sw.f_check, h_check=sw.h_check,
                sign_change_f=sw.sign_change_f, sign_change_h=sw.sign_change_h,
                entry=sw.entry, exit=sw.exit, variant=sw.variant,
                table=[dict(r=r, f=f, tau=t, u_tilde=u)
                       for r, f, t, u in zip(sw.r, sw.f, sw.tau, sw.u_tilde)])


def cmd_sweep(cfg: RunConfig, timer):
    thetas = cfg.doc["thetas"] or [cfg.doc["theta"]]
    rows, ok = [], True
    with timer("interval_J"):
        J = search.interval_J(cfg.amb)
    for t in thetas:
        q = parse_theta(t)
        with timer(f"sweep {q}"):
            try:
                sw = search.sweep_upsilon(q, cfg.amb, tol=cfg.ode_tol)
            except search.SweepError as exc:
                rows.append(dict(theta0=q, error=str(exc)))
                ok = False
                continue
        rep = _sweep_report(sw)
        rep["passed"] = bool(abs(sw.f_star) <= cfg.doc["tolerances"]["root_tol"]
                             and sw.sign_change_f and sw.sign_change_h)
        ok &= rep["passed"]
        rows.append(rep)
        with open(cfg.out / f"sweep_{q.numerator}_{q.denominator}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "f", "tau", "u_tilde"])
            for r in rep["table"]:
                w.writerow([_g17(r["r"]), _g17(r["f"]), _g17(r["tau"]), _g17(r["u_tilde"])])
    return dict(interval_J=dict(lo=J.lo, hi=J.hi, empirical=J.empirical), sweeps=rows), ok


def cmd_family(cfg: RunConfig, timer):
    q = cfg.theta
    fam_cfg = cfg.doc["family"]
    with timer("sweep"):
        sw = search.sweep_upsilon(q, cfg.amb, tol=cfg.ode_tol)
    with timer("continuation"):
        fam = search.continue_family(q, sw.seed, cfg.amb, eta_max=float(fam_cfg["eta_max"]),
                                     step=float(fam_cfg["step"]), tol=cfg.ode_tol)
    rows, certs, meshes = [], [], []
    ok = True
    largest = None
    for mem in fam.members:
        sp = SeedParams(mem.a, mem.b, mem.c_resolved)
        with timer("certify"):
            tau = find_tau(integrate_hamiltonian(sp, 4.0, cfg.ode_tol), sp)
            ann, cert = _build_cert(sp, tau, cfg, "free")
        name = f"member_eta_{mem.eta:.4f}"
        meshes.append(_emit_mesh(cfg.out, name, ann.mesh(), _annulus_sidecar(ann, cert, cfg, "free")))
        certs.append(dict(eta=mem.eta, **cert.as_dict()))
        rows.append(dict(eta=mem.eta, a=mem.a, b=mem.b, c=mem.c_resolved, theta=mem.theta, h=mem.h,
                         angle=cert.contact["angle_plus"], embedded=cert.embedded["passed"],
                         passed=cert.passed))
        ok &= cert.passed
        if cert.passed and (largest is None or mem.eta > largest):
            largest = mem.eta
    with open(cfg.out / "family.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eta", "a", "b", "c", "theta", "h", "angle", "embedded", "passed"])
        for r in rows:
            w.writerow([_g17(r["eta"]), _g17(r["a"]), _g17(r["b"]), _g17(r["c"]), _g17(r["theta"]),
                        _g17(r["h"]), _g17(r["angle"]), int(r["embedded"]), int(r["passed"])])
    return dict(sweep={k: v for k, v in _sweep_report(sw).items() if k != "table"},
                family=rows, certificates=certs, meshes=meshes,
                largest_certified_eta=largest,
                largest_certified_eta_note="largest sampled eta with a passing certificate; "
                                           "not a sharp bound"), ok


def cmd_capillary(cfg: RunConfig, timer):
    c = cfg.doc["capillary"]
    n = int(c["n"]) if c.get("n") else cfg.theta.denominator
    if cfg.theta.numerator != -1 and not c.get("n"):
        raise ConfigError("capillary mode builds the level -1/n")
    with timer("capillary seed"):
        fam = search.capillary_family(n, cfg.amb, a_values=tuple(float(a) for a in c["a_values"]),
                                      second=c.get("second"), tol=cfg.ode_tol)
    certs, meshes, rows = [], [], []
    ok = True
    for k, mem in enumerate(fam.members):
        sp = SeedParams(mem["a"], mem["b"], mem["c"])
        with timer("certify"):
            ann, cert = _build_cert(sp, mem["u_star"], cfg, "capillary")
        name = f"capillary_{k}"
        meshes.append(_emit_mesh(cfg.out, name, ann.mesh(),
                                 _annulus_sidecar(ann, cert, cfg, "capillary")))
        m3_ok = abs(mem["m3"]) <= 1e-10
        passed = cert.passed and m3_ok
        ok &= passed
        certs.append(dict(member=mem, m3_ok=m3_ok, **cert.as_dict()))
        rows.append(dict(a=mem["a"], b=mem["b"], c=mem["c"], u_star=mem["u_star"], passed=passed))
    return dict(branch=fam.branch, seed=fam.seed, seed_u0=fam.seed_u0, u_bar=fam.u_bar, n=n,
                members=rows, certificates=certs, meshes=meshes), ok


def _lift(V, eps):
    return inverse_stereographic(V, eps)


def cmd_verify(cfg: RunConfig, timer):
    v = cfg.doc["verify"]
    if not v.get("mesh"):
        raise ConfigError("verify mode needs verify.mesh")
    obj = Path(v["mesh"])
    if not obj.is_absolute() and cfg.source:
        cand = Path(cfg.source).parent / obj
        obj = cand if cand.exists() else obj
    side = read_sidecar(obj.with_suffix(".json"))
    with timer("read"):
        mesh = read_obj(obj)
        ply = obj.with_suffix(".ply")
        ply_diff = None
        if ply.exists():
            pm = read_ply(ply)
            ply_diff = float(np.max(np.abs(pm.vertices - mesh.vertices)))
    p = side["params"]
    eps = int(p["epsilon"])
    amb = Ambient(eps, float(p["H"]))
    ball_m, ball_d = np.array(side["ball"]["m"]), float(side["ball"]["d"])
    tcert = cfg.cert_tol
    recut = v.get("recut_factor")
    with timer("regenerate"):
        if side["kind"] == "rotational":
            if recut:
                raise ConfigError("recut applies to annulus meshes")
            rot = search.rotational_annulus(amb.H, float(p["delta"]), amb, n_s=int(p["n_s"]),
                                            n_t=int(p["n_t"]))
            regen = rot.mesh()
            checks = search.certify_rotational(rot, tcert)["checks"]
        else:
            sp = SeedParams(p["a"], p["b"], p["c"])
            u0 = float(p["u0"]) * (float(recut) if recut else 1.0)
            ann = search.build_annulus(sp, u0, amb, n_u=int(p["n_u"]), per_sigma=int(p["per_sigma"]),
                                       tol=float(p["ode_tol"]))
            regen = ann.mesh()
            checks = search.certify(ann, side["mode"], tolerances=tcert).checks
    if recut:
        # re-cut geometry, judged against the recorded ball
        mesh = regen
    with timer("mesh checks"):
        X = _lift(mesh.vertices, eps)
        on = float(np.max(np.abs(inner(X, X, eps) - eps)))
        margin = float(np.min(inner(X, ball_m, eps) - ball_d))
        loops = side["boundary_loops"]
        sph = max(float(np.max(np.abs(inner(X[lp], ball_m, eps) - ball_d))) for lp in loops)
        hits = int(len(self_intersections(mesh)))
    vdiff = None if recut else float(np.max(np.abs(regen.vertices - mesh.vertices)))
    mesh_checks = dict(on_manifold=on <= 1e-9, containment=margin >= -tcert["containment"],
                       sphericity=sph <= max(tcert["sphere"], 1e-9), embedded=hits == 0)
    reproduced = None if recut else {k: bool(checks.get(k) == side["checks"].get(k))
                                     for k in side["checks"]}
    ok = all(mesh_checks.values())
    if not recut:
        ok = ok and vdiff <= 1e-9 and all(reproduced.values()) and (ply_diff is None or ply_diff == 0)
    return dict(mesh=str(obj.name), recut_factor=recut, ply_max_diff=ply_diff,
                regenerated_max_diff=vdiff, on_manifold_residual=on, containment_margin=margin,
                loop_sphericity=sph, intersections=hits, mesh_checks=mesh_checks,
                regenerated_checks=checks, stored_checks=side["checks"],
                verdicts_reproduced=reproduced), ok


COMMANDS = dict(rotational=cmd_rotational, sweep=cmd_sweep, family=cmd_family,
                capillary=cmd_capillary, verify=cmd_verify)


def run(cfg: RunConfig):
    cfg.out.mkdir(parents=True, exist_ok=True)
    timer = Timer()
    body, ok = COMMANDS[cfg.mode](cfg, timer)
    report = dict(mode=cfg.mode, config=cfg.doc, passed=bool(ok), **body)
    write_json(cfg.out / "report.json", report)
    write_json(cfg.out / "timings.json", timer.stages)
    return report, ok


def build_parser():
    ap = argparse.ArgumentParser(prog="forge", description=__doc__.splitlines()[0])
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--config", help="JSON run configuration")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--theta", help="target period m/n")
    ap.add_argument("--H", type=float)
    ap.add_argument("--eps", type=int, choices=(1, -1))
    ap.add_argument("--tol", type=float, help="ODE tolerance")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.mode, args.config,
                          dict(theta=args.theta, H=args.H, eps=args.eps, tol=args.tol), args.out)
        report, ok = run(cfg)
    except (ConfigError, RegimeError, SeedDomainError, search.SweepError,
            search.ContinuationError, FileNotFoundError) as exc:
        print(f"forge {args.mode}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(f"forge {args.mode}: {'PASS' if ok else 'FAIL'} -> {os.path.join(args.out, 'report.json')}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
