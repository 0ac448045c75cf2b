import json

import numpy as np
import pytest

from cmcforge import cli


def write_cfg(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def run(tmp_path, mode, doc, name="out", extra=()):
    cfg = write_cfg(tmp_path / f"{name}.json", doc)
    out = tmp_path / name
    code = cli.main([mode, "--config", cfg, "--out", str(out), *extra])
    rep = json.loads((out / "report.json").read_text()) if (out / "report.json").exists() else None
    return code, rep, out


SPHERE = {"ambient": {"epsilon": 1, "H": 0.0}}


def test_rotational_catenoid_piece(tmp_path):
    code, rep, out = run(tmp_path, "rotational", {**SPHERE, "rotational": {"delta": 0.3}})
    assert code == 0 and rep["passed"]
    assert all(rep["certificates"][0]["checks"].values())
    assert (out / "rotational.obj").exists() and (out / "rotational.ply").exists()


def test_rotational_torus_branch(tmp_path):
    code, rep, _ = run(tmp_path, "rotational", {**SPHERE, "rotational": {"delta": 0.5}})
    assert code == 0
    cert = rep["certificates"][0]
    assert cert["params"]["torus"] and cert["params"]["s_tilde"] == pytest.approx(np.pi / (2 * np.sqrt(2)), abs=1e-10)


def test_rotational_zero_delta_rejected(tmp_path):
    code, rep, _ = run(tmp_path, "rotational", {**SPHERE, "rotational": {"delta": 0.0}})
    assert code == 2 and rep is None


@pytest.mark.parametrize("theta", ["1/2", "-2/4", "abc", "-1/0"])
def test_bad_theta(tmp_path, theta):
    code, _, _ = run(tmp_path, "sweep", {"theta": theta})
    assert code == 2


def test_bad_tolerance(tmp_path):
    assert run(tmp_path, "rotational", {"rotational": {"delta": 0.3}}, extra=("--tol", "-1"))[0] == 2


def test_overrides():
    cfg = cli.load_config("sweep", None, dict(theta="-1/3", H=2.0, eps=-1, tol=1e-10))
    assert cfg.theta == cli.parse_theta("-1/3") and cfg.amb.H == 2.0 and cfg.ode_tol == 1e-10


def test_rotational_deterministic(tmp_path):
    doc = {**SPHERE, "rotational": {"delta": 0.3}}
    _, _, o1 = run(tmp_path, "rotational", doc, "a")
    _, _, o2 = run(tmp_path, "rotational", doc, "b")
    for f in ("report.json", "rotational.obj", "rotational.ply", "rotational.json"):
        assert (o1 / f).read_bytes() == (o2 / f).read_bytes()


@pytest.fixture(scope="module")
def family_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("family")
    doc = {"ambient": {"epsilon": -1, "H": 1.5}, "theta": "-1/2",
           "family": {"eta_max": 0.02, "step": 0.01}}
    return tmp, doc, run(tmp, "family", doc)


def test_family_members_certified(family_run):
    _, _, (code, rep, out) = family_run
    assert code == 0 and rep["passed"]
    assert [r["eta"] for r in rep["family"]] == pytest.approx([0.0, 0.01, 0.02])
    assert all(c["passed"] for c in rep["certificates"])
    assert rep["largest_certified_eta"] == pytest.approx(0.02)
    assert (out / "family.csv").read_text().count("\n") == 4


def test_family_deterministic(family_run):
    tmp, doc, (_, _, out) = family_run
    _, _, out2 = run(tmp, "family", doc, "again")
    for f in sorted(p.name for p in out.iterdir() if p.name != "timings.json"):
        assert (out / f).read_bytes() == (out2 / f).read_bytes(), f


def test_verify_round_trip(family_run, tmp_path):
    _, _, (_, _, out) = family_run
    code, rep, _ = run(tmp_path, "verify", {"verify": {"mesh": str(out / "member_eta_0.0100.obj")}})
    assert code == 0
    assert rep["regenerated_max_diff"] <= 1e-9 and rep["ply_max_diff"] == 0
    assert all(rep["verdicts_reproduced"].values()) and rep["intersections"] == 0


def test_verify_truncation_negative_control(family_run, tmp_path):
    _, _, (_, _, out) = family_run
    code, rep, _ = run(tmp_path, "verify",
                       {"verify": {"mesh": str(out / "member_eta_0.0100.obj"), "recut_factor": 1.15}})
    assert code == 1
    assert not rep["mesh_checks"]["containment"]


def test_verify_missing_mesh(tmp_path):
    assert run(tmp_path, "verify", {})[0] == 2
    assert run(tmp_path, "verify", {"verify": {"mesh": str(tmp_path / "none.obj")}})[0] == 2


def test_capillary_equal_angles(tmp_path):
    code, rep, _ = run(tmp_path, "capillary", {**SPHERE, "theta": "-1/2"})
    assert code == 0
    cont = rep["certificates"][0]["contact"]
    assert cont["angle_spread"] <= 1e-6 and abs(cont["angle_plus"] - np.pi / 2) > 1e-3


def test_sweep_report_and_table(tmp_path):
    code, rep, out = run(tmp_path, "sweep", {"theta": "-1/2"})
    assert code == 0
    sw = rep["sweeps"][0]
    assert sw["r_star"] == pytest.approx(1.8552801546596478, abs=1e-8)
    assert (out / "sweep_-1_2.csv").exists()
