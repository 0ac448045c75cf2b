import numpy as np
import pytest

from cmcforge.mesh import (
    Mesh, grid_mesh, write_obj, read_obj, write_ply, read_ply, write_sidecar, read_sidecar,
    _sat_intersect, self_intersections, is_embedded, closed_loop_simple,
)


def torus_grid(n_u=20, n_v=40, R=2.0, r=0.5, turns=1):
    u = np.linspace(0, 2 * np.pi, n_u, endpoint=False)
    v = np.linspace(0, 2 * np.pi * turns, n_v, endpoint=False)
    U, V = np.meshgrid(u, v, indexing="ij")
    return np.stack([(R + r * np.cos(U)) * np.cos(V), (R + r * np.cos(U)) * np.sin(V), r * np.sin(U)], -1)


def cylinder_grid(n_u=6, n_v=32, turns=1):
    u = np.linspace(-1, 1, n_u)
    v = np.linspace(0, 2 * np.pi * turns, n_v, endpoint=False)
    U, V = np.meshgrid(u, v, indexing="ij")
    # a moebius-free double cover is made by tilting the second sheet
    rad = 1 + 0.2 * np.sin(V / turns) * (turns > 1)
    return np.stack([rad * np.cos(V), rad * np.sin(V), U + 0.3 * np.sin(V) * (turns > 1)], -1)


def test_grid_counts_and_loops():
    m = grid_mesh(cylinder_grid(6, 32))
    assert m.n_vertices == 6 * 32 and m.n_faces == 2 * 5 * 32
    assert m.shape == (6, 32)
    assert m.loops[0] == list(range(32)) and m.loops[1] == list(range(5 * 32, 6 * 32))
    # every interior edge is shared by exactly two faces
    e = np.sort(np.concatenate([m.faces[:, [0, 1]], m.faces[:, [1, 2]], m.faces[:, [2, 0]]]), axis=1)
    _, cnt = np.unique(e, axis=0, return_counts=True)
    assert set(cnt.tolist()) <= {1, 2} and np.sum(cnt == 1) == 2 * 32


def test_grid_no_wrap():
    m = grid_mesh(cylinder_grid(4, 10), wrap_v=False)
    assert m.n_faces == 2 * 3 * 9


def test_grid_too_small():
    with pytest.raises(ValueError):
        grid_mesh(np.zeros((1, 5, 3)))


def test_obj_ply_sidecar_round_trip(tmp_path):
    m = grid_mesh(cylinder_grid(5, 16) * np.pi)
    write_obj(tmp_path / "a.obj", m, header=["test"])
    write_ply(tmp_path / "a.ply", m)
    write_sidecar(tmp_path / "a.json", m, {"extra": 1})
    mo, mp = read_obj(tmp_path / "a.obj"), read_ply(tmp_path / "a.ply")
    assert np.array_equal(mo.vertices, m.vertices) and np.array_equal(mo.faces, m.faces)
    assert np.array_equal(mp.vertices, m.vertices) and np.array_equal(mp.faces, m.faces)
    side = read_sidecar(tmp_path / "a.json")
    assert side["n_faces"] == m.n_faces and side["boundary_loops"] == m.loops
    assert side["grid_shape"] == [5, 16] and side["extra"] == 1


T = np.array([[0., 0, 0], [1, 0, 0], [0, 1, 0]])


@pytest.mark.parametrize("other,hit", [
    (T + [0, 0, 1], False),                                 # parallel, disjoint
    (np.array([[0.2, 0.2, -1], [0.2, 0.2, 1], [0.3, 0.5, 1]]), True),   # piercing
    (T + [0.3, 0.3, 0], True),                              # coplanar overlap
    (T + [2, 0, 0], False),                                 # coplanar apart
    (np.array([[2., 2, -1], [2, 2, 1], [3, 2, 0]]), False),  # crossing the plane outside
])
def test_sat_cases(other, hit):
    assert bool(_sat_intersect(T[None], other[None], 1e-12)[0]) is hit
    assert bool(_sat_intersect(other[None], T[None], 1e-12)[0]) is hit


def test_torus_embedded():
    m = grid_mesh(torus_grid())
    assert is_embedded(m)
    assert len(self_intersections(m)) == 0


def test_double_cover_detected():
    # a band winding twice with varying radius and height crosses itself
    m = grid_mesh(cylinder_grid(6, 80, turns=2))
    assert not is_embedded(m)


def test_planted_intersection():
    m = grid_mesh(torus_grid())
    extra = np.array([[0, 0, -1.0], [0, 0, 1.0], [2.5, 0, 0.0]])
    V = np.vstack([m.vertices, extra])
    F = np.vstack([m.faces, [len(m.vertices), len(m.vertices) + 1, len(m.vertices) + 2]])
    assert not is_embedded(Mesh(V, F))


def test_closed_loop_simple():
    t = np.linspace(0, 2 * np.pi, 200, endpoint=False)
    assert closed_loop_simple(np.stack([np.cos(t), np.sin(t)], 1))
    # figure eight, sampled so the crossing is not a vertex
    s = t + 0.013
    assert not closed_loop_simple(np.stack([np.sin(s), np.sin(2 * s)], 1))
    # a doubly traversed circle, slightly perturbed, crosses itself
    r = 1 + 0.05 * np.cos(t)
    assert not closed_loop_simple(np.stack([r * np.cos(2 * t), r * np.sin(2 * t)], 1))
