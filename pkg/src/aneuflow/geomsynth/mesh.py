"""Triangle surface meshes: topology queries, repair, volume and smoothing."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree


WALL_TAG = -1


class MeshError(ValueError):
    """Raised for topologically invalid meshes."""


class MeshRepairError(MeshError):
    """Mesh could not be repaired into a closed 2-manifold.

    Attributes
    ----------
    boundary_loops : list of vertex-index arrays, one per open loop
    nonmanifold_edges : (k, 2) array of edges with more than two faces
    """

    def __init__(self, message, boundary_loops=(), nonmanifold_edges=None):
        super().__init__(message)
        self.boundary_loops = list(boundary_loops)
        if nonmanifold_edges is None:
            nonmanifold_edges = np.empty((0, 2), dtype=np.int64)
        self.nonmanifold_edges = nonmanifold_edges


class SelfIntersectionError(MeshError):
    """The surface intersects itself."""

    def __init__(self, message, pairs=None):
        super().__init__(message)
        self.pairs = pairs


@dataclass
class TriMesh:
    """Indexed triangle mesh in millimetres.

    ``face_tags`` marks end caps: ``-1`` for vessel wall, ``k >= 0`` for the
    k-th opening cap.
    """

    vertices: np.ndarray
    faces: np.ndarray
    face_tags: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.face_tags is None:
            self.face_tags = np.full(len(self.faces), WALL_TAG, dtype=np.int64)
        else:
            self.face_tags = np.asarray(self.face_tags, dtype=np.int64).reshape(-1)
        if len(self.face_tags) != len(self.faces):
            raise ValueError("face_tags must have one entry per face")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def copy(self) -> "TriMesh":
        return TriMesh(self.vertices.copy(), self.faces.copy(), self.face_tags.copy())

    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    def cap_ids(self) -> list[int]:
        return sorted(int(t) for t in np.unique(self.face_tags) if t >= 0)

    def cap_vertex_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.faces[self.face_tags >= 0].ravel()] = True
        return mask

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def face_cross(mesh: TriMesh) -> np.ndarray:
    tri = mesh.triangles()
    return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])


def face_areas(mesh: TriMesh) -> np.ndarray:
    return 0.5 * np.linalg.norm(face_cross(mesh), axis=1)


def face_normals(mesh: TriMesh) -> np.ndarray:
    c = face_cross(mesh)
    n = np.linalg.norm(c, axis=1, keepdims=True)
    return c / np.where(n > 0, n, 1.0)


def vertex_normals(mesh: TriMesh) -> np.ndarray:
    """Area-weighted average of incident face normals, unit length."""
    c = face_cross(mesh)  # |c| = 2 * area, so summing c weights by area
    acc = np.zeros_like(mesh.vertices)
    for k in range(3):
        np.add.at(acc, mesh.faces[:, k], c)
    n = np.linalg.norm(acc, axis=1, keepdims=True)
    return acc / np.where(n > 0, n, 1.0)


def edge_table(faces: np.ndarray):
    """Unique undirected edges with their incidence counts.

    Returns ``(edges, counts, inverse)`` where ``inverse`` maps the ``3F``
    directed half-edges (ordered face by face) to rows of ``edges``.
    """
    half = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]], axis=0)
    # reorder so that half-edge 3*f + k belongs to face f
    half = half.reshape(3, -1, 2).transpose(1, 0, 2).reshape(-1, 2)
    key = np.sort(half, axis=1)
    edges, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    return edges, counts, inverse.reshape(-1)


def vertex_adjacency(mesh: TriMesh) -> sparse.csr_matrix:
    edges, _, _ = edge_table(mesh.faces)
    n = mesh.n_vertices
    data = np.ones(2 * len(edges))
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))


def boundary_loops(mesh: TriMesh) -> list[np.ndarray]:
    """Vertex sets of the open boundary loops (edges with a single face)."""
    edges, counts, _ = edge_table(mesh.faces)
    be = edges[counts == 1]
    if len(be) == 0:
        return []
    verts, local = np.unique(be, return_inverse=True)
    local = local.reshape(-1, 2)
    g = sparse.coo_matrix(
        (np.ones(len(local)), (local[:, 0], local[:, 1])), shape=(len(verts), len(verts))
    )
    n_comp, labels = csgraph.connected_components(g, directed=False)
    return [verts[labels == k] for k in range(n_comp)]


def is_closed_manifold(mesh: TriMesh) -> bool:
    if mesh.n_faces == 0:
        return False
    _, counts, _ = edge_table(mesh.faces)
    return bool(np.all(counts == 2))


def euler_characteristic(mesh: TriMesh) -> int:
    edges, _, _ = edge_table(mesh.faces)
    used = np.unique(mesh.faces)
    return int(len(used) - len(edges) + mesh.n_faces)


def signed_volume(mesh: TriMesh) -> float:
    tri = mesh.triangles()
    # shift to the centroid to limit cancellation for meshes far from the origin
    c = mesh.vertices.mean(axis=0) if mesh.n_vertices else np.zeros(3)
    a, b, d = tri[:, 0] - c, tri[:, 1] - c, tri[:, 2] - c
    return float(np.einsum("ij,ij->i", a, np.cross(b, d)).sum() / 6.0)


def mesh_volume(mesh: TriMesh) -> float:
    """Enclosed volume (mm^3) as a signed sum of tetrahedra.

    Positive for outward orientation, negative for an inward-oriented
    surface.

    Raises
    ------
    MeshError
        If the mesh is not closed (some edge lacks a second face).
    """
    if not is_closed_manifold(mesh):
        loops = boundary_loops(mesh)
        raise MeshError(f"mesh is not closed: {len(loops)} boundary loop(s)")
    return signed_volume(mesh)


def volume_change_rate(v_def: float, v_ref: float) -> float:
    """Relative volume change ``(v_def - v_ref) / v_ref``; not clamped."""
    if not v_ref > 0:
        raise ValueError(f"reference volume must be positive, got {v_ref}")
    return (v_def - v_ref) / v_ref


def remove_unused_vertices(mesh: TriMesh) -> TriMesh:
    used = np.unique(mesh.faces)
    remap = -np.ones(mesh.n_vertices, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriMesh(mesh.vertices[used], remap[mesh.faces], mesh.face_tags.copy())


def weld_vertices(mesh: TriMesh, tol: float = 1e-6) -> TriMesh:
    """Merge vertices closer than ``tol``; each cluster keeps its lowest index."""
    tree = cKDTree(mesh.vertices)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    if len(pairs) == 0:
        return mesh.copy()
    n = mesh.n_vertices
    g = sparse.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = csgraph.connected_components(g, directed=False)
    rep = np.full(labels.max() + 1, n, dtype=np.int64)
    np.minimum.at(rep, labels, np.arange(n))
    target = rep[labels]
    return remove_unused_vertices(TriMesh(mesh.vertices, target[mesh.faces], mesh.face_tags))


def _orient_faces(faces: np.ndarray) -> np.ndarray:
    """Flip faces so neighbours traverse shared edges in opposite directions."""
    edges, counts, inv = edge_table(faces)
    nf = len(faces)
    if np.any(counts > 2):
        return faces
    # for every interior edge, the two half-edges (face, local slot)
    order = np.argsort(inv, kind="stable")
    inv_sorted = inv[order]
    starts = np.searchsorted(inv_sorted, np.arange(len(edges)))
    partner = -np.ones(3 * nf, dtype=np.int64)
    two = np.flatnonzero(counts == 2)
    h0 = order[starts[two]]
    h1 = order[starts[two] + 1]
    partner[h0] = h1
    partner[h1] = h0

    def directed(f, k):
        a, b = faces[f, k], faces[f, (k + 1) % 3]
        return a, b

    flip = np.zeros(nf, dtype=bool)
    seen = np.zeros(nf, dtype=bool)
    for seed in range(nf):
        if seen[seed]:
            continue
        seen[seed] = True
        queue = deque([seed])
        while queue:
            f = queue.popleft()
            for k in range(3):
                h = 3 * f + k
                p = partner[h]
                if p < 0:
                    continue
                g = p // 3
                a, b = directed(f, k)
                if flip[f]:
                    a, b = b, a
                c, d = directed(g, p % 3)
                # neighbour must traverse (b, a); same direction means flip it
                if seen[g]:
                    continue
                flip[g] = c == a and d == b
                seen[g] = True
                queue.append(g)
    out = faces.copy()
    out[flip] = out[flip][:, ::-1]
    return out


def check_and_repair(mesh: TriMesh, tol: float = 1e-6) -> TriMesh:
    """Weld, drop degenerate and duplicate faces, orient consistently outward.

    Raises
    ------
    MeshRepairError
        If non-manifold edges or holes remain. The message names the number of
        boundary loops (``"1 boundary loop"``) or lists the offending edges.
    """
    out = weld_vertices(mesh, tol)
    f = out.faces
    tags = out.face_tags
    keep = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 2] != f[:, 0])
    f, tags = f[keep], tags[keep]
    area = 0.5 * np.linalg.norm(
        np.cross(out.vertices[f[:, 1]] - out.vertices[f[:, 0]], out.vertices[f[:, 2]] - out.vertices[f[:, 0]]),
        axis=1,
    )
    keep = area > tol * tol
    f, tags = f[keep], tags[keep]
    _, first = np.unique(np.sort(f, axis=1), axis=0, return_index=True)
    first = np.sort(first)
    f, tags = f[first], tags[first]
    out = remove_unused_vertices(TriMesh(out.vertices, f, tags))

    edges, counts, _ = edge_table(out.faces)
    bad = edges[counts > 2]
    if len(bad):
        listing = ", ".join(f"({a},{b})" for a, b in bad[:20])
        raise MeshRepairError(
            f"{len(bad)} non-manifold edge(s): {listing}", nonmanifold_edges=bad
        )
    loops = boundary_loops(out)
    if loops:
        word = "loop" if len(loops) == 1 else "loops"
        raise MeshRepairError(f"{len(loops)} boundary {word} remain (holes)", boundary_loops=loops)

    out.faces = _orient_faces(out.faces)
    if signed_volume(out) < 0:
        out.faces = out.faces[:, ::-1].copy()
    return out


def taubin_smooth(
    mesh: TriMesh,
    iterations: int,
    lam: float = 0.5,
    mu: float = -0.53,
    fixed: np.ndarray | None = None,
) -> TriMesh:
    """Taubin lambda|mu smoothing with uniform umbrella weights.

    Connectivity is untouched; vertices flagged in ``fixed`` stay put.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    out = mesh.copy()
    if iterations == 0:
        return out
    adj = vertex_adjacency(mesh)
    deg = np.asarray(adj.sum(axis=1)).ravel()
    w = sparse.diags(1.0 / np.where(deg > 0, deg, 1.0)) @ adj
    move = np.ones(mesh.n_vertices, dtype=bool) if fixed is None else ~np.asarray(fixed, bool)
    move &= deg > 0
    x = out.vertices
    for _ in range(iterations):
        for factor in (lam, mu):
            lap = w @ x - x
            x = x + factor * lap * move[:, None]
    out.vertices = x
    return out


smooth = taubin_smooth


# -- self-intersection -------------------------------------------------------

def _segment_hits_triangle(p0, p1, a, b, c, eps=1e-9):
    """Vectorised strict segment/triangle crossing test (Moller-Trumbore)."""
    d = p1 - p0
    e1 = b - a
    e2 = c - a
    pvec = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > 1e-15
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = p0 - a
    u = np.einsum("ij,ij->i", tvec, pvec) * inv
    qvec = np.cross(tvec, e1)
    v = np.einsum("ij,ij->i", d, qvec) * inv
    t = np.einsum("ij,ij->i", e2, qvec) * inv
    return ok & (u > eps) & (v > eps) & (u + v < 1 - eps) & (t > eps) & (t < 1 - eps)


def self_intersecting_pairs(mesh: TriMesh, max_pairs: int | None = None) -> np.ndarray:
    """Pairs of non-adjacent faces whose interiors cross.

    Broad phase by centroid proximity (bounded by twice the largest
    circumradius), narrow phase by six edge/triangle crossing tests.
    """
    tri = mesh.triangles()
    cen = tri.mean(axis=1)
    rad = np.linalg.norm(tri - cen[:, None, :], axis=2).max(axis=1)
    tree = cKDTree(cen)
    pairs = tree.query_pairs(2.0 * rad.max() + 1e-12, output_type="ndarray")
    if len(pairs) == 0:
        return np.empty((0, 2), dtype=np.int64)
    i, j = pairs[:, 0], pairs[:, 1]
    near = np.linalg.norm(cen[i] - cen[j], axis=1) <= rad[i] + rad[j]
    i, j = i[near], j[near]
    fi, fj = mesh.faces[i], mesh.faces[j]
    shared = (fi[:, :, None] == fj[:, None, :]).any(axis=(1, 2))
    i, j = i[~shared], j[~shared]
    if len(i) == 0:
        return np.empty((0, 2), dtype=np.int64)
    hit = np.zeros(len(i), dtype=bool)
    for s, t in ((i, j), (j, i)):
        ts, tt = tri[s], tri[t]
        for k in range(3):
            p0, p1 = ts[:, k], ts[:, (k + 1) % 3]
            hit |= _segment_hits_triangle(p0, p1, tt[:, 0], tt[:, 1], tt[:, 2])
    out = np.stack([i[hit], j[hit]], axis=1)
    if max_pairs is not None:
        out = out[:max_pairs]
    return out


def assert_no_self_intersections(mesh: TriMesh) -> None:
    pairs = self_intersecting_pairs(mesh, max_pairs=10)
    if len(pairs):
        raise SelfIntersectionError(
            f"surface self-intersects ({len(pairs)}+ crossing face pairs, e.g. {pairs[0].tolist()})",
            pairs=pairs,
        )
