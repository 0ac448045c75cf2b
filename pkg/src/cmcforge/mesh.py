"""Triangle meshes of parametrised annuli: triangulation, file I/O and a
self-intersection sweep."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree


@dataclass
class Mesh:
    vertices: np.ndarray          # (n, 3)
    faces: np.ndarray             # (m, 3) int
    loops: list = field(default_factory=list)   # boundary polylines (vertex indices)
    shape: tuple | None = None    # (n_u, n_v) when built from a grid

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)


def grid_mesh(points, wrap_v=True) -> Mesh:
    """Triangulate a (n_u, n_v, 3) grid, gluing the last v-column to the first.

    When wrap_v is set the caller passes the n_v distinct columns (the closing
    column v = period excluded).
    """
    P = np.asarray(points, dtype=float)
    n_u, n_v = P.shape[:2]
    if n_u < 2 or n_v < 3:
        raise ValueError("grid too small to triangulate")
    idx = np.arange(n_u * n_v).reshape(n_u, n_v)
    cols = n_v if wrap_v else n_v - 1
    j = np.arange(cols)
    jn = (j + 1) % n_v
    i = np.arange(n_u - 1)[:, None]
    a, b = idx[i, j], idx[i + 1, j]
    c, d = idx[i + 1, jn], idx[i, jn]
    f1 = np.stack([a, b, c], axis=-1).reshape(-1, 3)
    f2 = np.stack([a, c, d], axis=-1).reshape(-1, 3)
    faces = np.concatenate([f1, f2])
    loops = [idx[0].tolist(), idx[-1].tolist()]
    return Mesh(P.reshape(-1, 3).copy(), faces.astype(np.int64), loops, (n_u, n_v))


# ---------------------------------------------------------------- OBJ / PLY

def write_obj(path, mesh: Mesh, header=()):
    with open(path, "w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        for v in mesh.vertices:
            fh.write("v {:.17g} {:.17g} {:.17g}\n".format(*v))
        for f in mesh.faces + 1:
            fh.write("f {} {} {}\n".format(*f))
        for loop in mesh.loops:
            fh.write("l " + " ".join(str(k + 1) for k in list(loop) + [loop[0]]) + "\n")


def read_obj(path) -> Mesh:
    V, F, L = [], [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                V.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                F.append([int(x.split("/")[0]) - 1 for x in parts[1:4]])
            elif parts[0] == "l":
                loop = [int(x) - 1 for x in parts[1:]]
                if len(loop) > 1 and loop[0] == loop[-1]:
                    loop = loop[:-1]
                L.append(loop)
    return Mesh(np.array(V, dtype=float), np.array(F, dtype=np.int64).reshape(-1, 3), L)


def write_ply(path, mesh: Mesh):
    """Binary little-endian PLY with double precision vertices."""
    head = ("ply\nformat binary_little_endian 1.0\n"
            f"element vertex {mesh.n_vertices}\n"
            "property double x\nproperty double y\nproperty double z\n"
            f"element face {mesh.n_faces}\n"
            "property list uchar int vertex_indices\nend_header\n")
    V = np.ascontiguousarray(mesh.vertices, dtype="<f8")
    rec = np.empty(mesh.n_faces, dtype=[("n", "u1"), ("i", "<i4", (3,))])
    rec["n"] = 3
    rec["i"] = mesh.faces
    with open(path, "wb") as fh:
        fh.write(head.encode("ascii"))
        fh.write(V.tobytes())
        fh.write(rec.tobytes())


def read_ply(path) -> Mesh:
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.index(b"end_header\n") + len(b"end_header\n")
    header = data[:end].decode("ascii").splitlines()
    if "format binary_little_endian 1.0" not in header:
        raise ValueError("only binary little-endian PLY is supported")
    nv = nf = None
    for line in header:
        if line.startswith("element vertex"):
            nv = int(line.split()[-1])
        elif line.startswith("element face"):
            nf = int(line.split()[-1])
    V = np.frombuffer(data, dtype="<f8", count=3 * nv, offset=end).reshape(nv, 3)
    rec = np.frombuffer(data, dtype=[("n", "u1"), ("i", "<i4", (3,))], count=nf,
                        offset=end + 24 * nv)
    if np.any(rec["n"] != 3):
        raise ValueError("non-triangular face in PLY")
    return Mesh(V.copy(), rec["i"].astype(np.int64), [])


def write_sidecar(path, mesh: Mesh, extra=None):
    doc = {"n_vertices": mesh.n_vertices, "n_faces": mesh.n_faces,
           "grid_shape": list(mesh.shape) if mesh.shape else None,
           "boundary_loops": [list(map(int, lp)) for lp in mesh.loops]}
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)


def read_sidecar(path):
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------- self intersection

def _sat_intersect(T1, T2, tol):
    """Separating-axis test for batches of triangle pairs (k, 3, 3).

    Axes: both face normals, the nine edge cross products and the six
    in-plane edge normals (needed for coplanar pairs). Returns True where no
    axis separates the pair.
    """
    E1 = np.roll(T1, -1, axis=1) - T1
    E2 = np.roll(T2, -1, axis=1) - T2
    n1 = np.cross(E1[:, 0], E1[:, 1])
    n2 = np.cross(E2[:, 0], E2[:, 1])
    cross = np.cross(E1[:, :, None, :], E2[:, None, :, :]).reshape(-1, 9, 3)
    inp1 = np.cross(n1[:, None, :], E1)
    inp2 = np.cross(n2[:, None, :], E2)
    axes = np.concatenate([n1[:, None], n2[:, None], cross, inp1, inp2], axis=1)
    norms = np.linalg.norm(axes, axis=-1)
    scale = np.max(np.linalg.norm(E1, axis=-1), axis=1) + np.max(np.linalg.norm(E2, axis=-1), axis=1)
    valid = norms > 1e-12 * scale[:, None] ** 2
    axes = axes / np.where(valid, norms, 1.0)[..., None]
    p1 = np.einsum("kav,kiv->kai", axes, T1)
    p2 = np.einsum("kav,kiv->kai", axes, T2)
    gap = tol * scale[:, None]
    sep = (p1.max(-1) < p2.min(-1) - gap) | (p2.max(-1) < p1.min(-1) - gap)
    sep &= valid
    return ~np.any(sep, axis=1)


def candidate_pairs(mesh: Mesh):
    """Broad phase: centroid ball query, AABB overlap, shared-vertex exclusion."""
    V, F = mesh.vertices, mesh.faces
    T = V[F]
    cen = T.mean(axis=1)
    rad = np.max(np.linalg.norm(T - cen[:, None], axis=-1), axis=1)
    tree = cKDTree(cen)
    pairs = tree.query_pairs(2.0 * float(rad.max()) * (1 + 1e-9), output_type="ndarray")
    if len(pairs) == 0:
        return pairs.reshape(0, 2)
    i, j = pairs[:, 0], pairs[:, 1]
    lo, hi = T.min(axis=1), T.max(axis=1)
    ok = np.all((lo[i] <= hi[j]) & (lo[j] <= hi[i]), axis=1)
    pairs = pairs[ok]
    Fi, Fj = F[pairs[:, 0]], F[pairs[:, 1]]
    shared = np.any(Fi[:, :, None] == Fj[:, None, :], axis=(1, 2))
    return pairs[~shared]


def self_intersections(mesh: Mesh, tol=1e-12, chunk=20000):
    """Face index pairs (non-adjacent) whose triangles intersect."""
    pairs = candidate_pairs(mesh)
    T = mesh.vertices[mesh.faces]
    hits = []
    for s in range(0, len(pairs), chunk):
        p = pairs[s:s + chunk]
        m = _sat_intersect(T[p[:, 0]], T[p[:, 1]], tol)
        hits.append(p[m])
    if not hits:
        return np.zeros((0, 2), dtype=np.int64)
    return np.concatenate(hits)


def is_embedded(mesh: Mesh) -> bool:
    return len(self_intersections(mesh)) == 0


def closed_loop_simple(points2d) -> bool:
    """True when the closed planar polyline has no crossing between non-adjacent edges."""
    P = np.asarray(points2d, dtype=float)
    n = len(P)
    A, B = P, np.roll(P, -1, axis=0)
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]

    def orient(p, q, r):
        return np.sign((q[:, 0] - p[:, 0]) * (r[:, 1] - p[:, 1]) - (q[:, 1] - p[:, 1]) * (r[:, 0] - p[:, 0]))

    o1 = orient(A[i], B[i], A[j])
    o2 = orient(A[i], B[i], B[j])
    o3 = orient(A[j], B[j], A[i])
    o4 = orient(A[j], B[j], B[i])
    return not bool(np.any((o1 * o2 < 0) & (o3 * o4 < 0)))
