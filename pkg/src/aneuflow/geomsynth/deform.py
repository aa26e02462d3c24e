"""Synthetic aneurysm sacs: outward region offset with a cosine transition band."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .mesh import (
    MeshError,
    SelfIntersectionError,
    TriMesh,
    assert_no_self_intersections,
    edge_table,
    mesh_volume,
    taubin_smooth,
    vertex_normals,
)

OFFSET_RANGE = (0.5, 1.0)


@dataclass
class DeformationSpec:
    region: np.ndarray
    offset_d: float
    band_width: float | None = None
    seed: int | None = None
    validate_range: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.region = np.unique(np.asarray(self.region, dtype=np.int64))
        if len(self.region) == 0:
            raise ValueError("deformation region is empty")
        if self.validate_range and not (OFFSET_RANGE[0] <= self.offset_d <= OFFSET_RANGE[1]):
            raise ValueError(f"offset_d must lie in {OFFSET_RANGE}, got {self.offset_d}")
        if self.band_width is None:
            self.band_width = 2.0 * self.offset_d
        if not self.band_width > 0:
            raise ValueError("band_width must be positive")


def _edge_graph(mesh: TriMesh) -> sparse.csr_matrix:
    edges, _, _ = edge_table(mesh.faces)
    w = np.linalg.norm(mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]], axis=1)
    n = mesh.n_vertices
    return sparse.csr_matrix(
        (np.concatenate([w, w]), (np.concatenate([edges[:, 0], edges[:, 1]]), np.concatenate([edges[:, 1], edges[:, 0]]))),
        shape=(n, n),
    )


def _face_graph(mesh: TriMesh, faces: np.ndarray) -> sparse.csr_matrix:
    """Edge-adjacency between the given faces (indices into ``faces``)."""
    sub = mesh.faces[faces]
    edges, counts, inv = edge_table(sub)
    inv = inv.reshape(-1, 3)
    owner = np.repeat(np.arange(len(sub)), 3)
    order = np.argsort(inv.ravel(), kind="stable")
    e_sorted = inv.ravel()[order]
    o_sorted = owner[order]
    same = e_sorted[1:] == e_sorted[:-1]
    a, b = o_sorted[:-1][same], o_sorted[1:][same]
    n = len(sub)
    return sparse.coo_matrix((np.ones(len(a)), (a, b)), shape=(n, n)).tocsr()


def region_is_connected(mesh: TriMesh, region: np.ndarray) -> bool:
    if len(region) <= 1:
        return True
    n_comp, _ = csgraph.connected_components(_face_graph(mesh, region), directed=False)
    return n_comp == 1


def band_distances(mesh: TriMesh, region_vertices: np.ndarray, limit: float) -> np.ndarray:
    """Shortest edge-path distance from the region, capped at ``limit`` (inf beyond)."""
    g = _edge_graph(mesh)
    dist = csgraph.dijkstra(g, directed=False, indices=region_vertices, min_only=True, limit=limit)
    return dist


def falloff(t: np.ndarray) -> np.ndarray:
    """Cosine blend weight: 1 at the region edge, 0 at the far side of the band."""
    t = np.clip(t, 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * t))


def offset_field(mesh: TriMesh, spec: DeformationSpec) -> np.ndarray:
    """Per-vertex displacement vectors for ``spec`` (without applying them)."""
    if spec.region.max() >= mesh.n_faces:
        raise ValueError("deformation region references faces outside the mesh")
    region_v = np.unique(mesh.faces[spec.region].ravel())
    normals = vertex_normals(mesh)
    weight = np.zeros(mesh.n_vertices)
    weight[region_v] = 1.0
    if spec.offset_d != 0:
        dist = band_distances(mesh, region_v, spec.band_width)
        band = np.isfinite(dist) & (weight == 0)
        weight[band] = falloff(dist[band] / spec.band_width)
    return spec.offset_d * weight[:, None] * normals


def apply_sac_offset(mesh: TriMesh, spec: DeformationSpec, check_intersections: bool = True) -> TriMesh:
    """Displace a wall region outward along vertex normals and blend its rim.

    Vertices of the region move by ``offset_d`` along area-weighted normals;
    vertices within ``band_width`` (edge-path distance) follow the cosine
    falloff. Cap vertices must stay untouched.

    Raises
    ------
    SelfIntersectionError
        If the displaced surface crosses itself; callers resample.
    MeshError
        If the region or its band reaches an end cap, or the mesh is open.
    """
    base_volume = mesh_volume(mesh)
    if not region_is_connected(mesh, spec.region):
        raise ValueError("deformation region must be edge-connected")
    if spec.offset_d == 0:
        return mesh.copy()
    disp = offset_field(mesh, spec)
    moved = np.linalg.norm(disp, axis=1) > 0
    if np.any(moved & mesh.cap_vertex_mask()):
        raise MeshError("deformation region or its transition band touches an end cap")
    out = mesh.copy()
    out.vertices = mesh.vertices + disp
    if check_intersections:
        assert_no_self_intersections(out)
    if spec.offset_d > 0 and not mesh_volume(out) > base_volume:
        raise SelfIntersectionError("offset did not increase the enclosed volume")
    return out


def geodesic_patch(mesh: TriMesh, seed_face: int, radius: float) -> np.ndarray:
    """Faces whose vertices all lie within ``radius`` (edge-path) of a seed face."""
    seeds = mesh.faces[seed_face]
    dist = csgraph.dijkstra(_edge_graph(mesh), directed=False, indices=seeds, min_only=True, limit=radius)
    inside = np.isfinite(dist)[mesh.faces].all(axis=1)
    inside &= mesh.face_tags < 0
    faces = np.flatnonzero(inside)
    if seed_face not in set(faces.tolist()):
        faces = np.append(faces, seed_face)
    # keep the component that holds the seed
    g = _face_graph(mesh, faces)
    _, lab = csgraph.connected_components(g, directed=False)
    k = lab[np.flatnonzero(faces == seed_face)[0]]
    return np.sort(faces[lab == k])


def sample_deformation_spec(
    mesh: TriMesh,
    rng: np.random.Generator,
    patch_radius: tuple[float, float] = (1.5, 2.5),
    cap_clearance: float = 1.0,
) -> DeformationSpec:
    """Random wall patch away from the caps with d ~ U[0.5, 1.0]."""
    d = float(rng.uniform(*OFFSET_RANGE))
    band = 2.0 * d
    radius = float(rng.uniform(*patch_radius))
    cap_v = np.flatnonzero(mesh.cap_vertex_mask())
    reach = radius + band + cap_clearance
    if len(cap_v):
        dist_cap = csgraph.dijkstra(_edge_graph(mesh), directed=False, indices=cap_v, min_only=True, limit=2 * reach)
    else:
        dist_cap = np.full(mesh.n_vertices, np.inf)
    ok = (mesh.face_tags < 0) & (dist_cap[mesh.faces].min(axis=1) > reach)
    candidates = np.flatnonzero(ok)
    if len(candidates) == 0:
        raise MeshError("no wall face far enough from the caps for a sac region")
    seed_face = int(candidates[rng.integers(len(candidates))])
    region = geodesic_patch(mesh, seed_face, radius)
    return DeformationSpec(region=region, offset_d=d, band_width=band, seed=int(rng.integers(2**31)))


def sample_deformations(
    base: TriMesh,
    count: int,
    seed: int,
    smooth_iterations: int = 5,
    max_rejections: int = 10,
    patch_radius: tuple[float, float] = (1.5, 2.5),
) -> list[TriMesh]:
    """``count`` independently deformed copies of ``base``; pure in ``seed``.

    Each copy gets its own random patch and offset, followed by a light Taubin
    pass with the caps pinned.

    Raises
    ------
    MeshError
        After ``max_rejections`` consecutive self-intersecting proposals.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    fixed = base.cap_vertex_mask()
    out = []
    specs = []
    rejections = 0
    while len(out) < count:
        spec = sample_deformation_spec(base, rng, patch_radius=patch_radius)
        try:
            mesh = apply_sac_offset(base, spec)
            mesh = taubin_smooth(mesh, smooth_iterations, fixed=fixed)
            assert_no_self_intersections(mesh)
        except SelfIntersectionError:
            rejections += 1
            if rejections > max_rejections:
                raise MeshError(f"{rejections} consecutive self-intersecting deformations; giving up")
            continue
        rejections = 0
        out.append(mesh)
        specs.append(spec)
    return out


def deformation_volumes(meshes: list[TriMesh]) -> np.ndarray:
    return np.array([mesh_volume(m) for m in meshes])
