"""Parametric vessel geometry: swept tubes, bifurcation trees and test primitives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage.measure import marching_cubes

from .mesh import MeshError, TriMesh, check_and_repair, edge_table, signed_volume


class SweepError(MeshError):
    """The swept tube would overlap itself."""


@dataclass
class Centerline:
    """Ordered polyline (mm) with a tube radius per point."""

    points: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.radii = np.broadcast_to(np.asarray(self.radii, dtype=np.float64), (len(self.points),)).copy()
        if len(self.points) < 2:
            raise ValueError("a centerline needs at least 2 points")
        if np.any(self.radii <= 0):
            raise ValueError("all radii must be positive")
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        if np.any(seg <= 0):
            raise ValueError("consecutive centerline points must be distinct")

    @property
    def arclength(self) -> np.ndarray:
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])

    def resample(self, spacing: float) -> "Centerline":
        s = self.arclength
        n = max(2, int(np.ceil(s[-1] / spacing)) + 1)
        t = np.linspace(0.0, s[-1], n)
        pts = np.stack([np.interp(t, s, self.points[:, k]) for k in range(3)], axis=1)
        return Centerline(pts, np.interp(t, s, self.radii))

    def tangents(self) -> np.ndarray:
        p = self.points
        t = np.empty_like(p)
        t[1:-1] = p[2:] - p[:-2]
        t[0] = p[1] - p[0]
        t[-1] = p[-1] - p[-2]
        return t / np.linalg.norm(t, axis=1, keepdims=True)


def straight_centerline(length: float, radius: float, axis=(0.0, 0.0, 1.0), start=(0.0, 0.0, 0.0)) -> Centerline:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    start = np.asarray(start, dtype=np.float64)
    return Centerline(np.stack([start, start + length * axis]), [radius, radius])


def _perpendicular(t: np.ndarray) -> np.ndarray:
    a = np.array([1.0, 0.0, 0.0]) if abs(t[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    n = a - a.dot(t) * t
    return n / np.linalg.norm(n)


def _check_sweep(cl: Centerline, spacing: float) -> None:
    p, r = cl.points, cl.radii
    d = np.diff(p, axis=0)
    seg = np.linalg.norm(d, axis=1)
    u = d / seg[:, None]
    if len(u) > 1:
        cosang = np.clip(np.einsum("ij,ij->i", u[:-1], u[1:]), -1.0, 1.0)
        turn = np.arccos(cosang)
        # rings one spacing apart tilted by `turn` overlap once r*sin(turn) reaches the spacing
        bad = r[1:-1] * np.sin(np.minimum(turn, np.pi / 2)) >= 0.9 * np.minimum(seg[:-1], seg[1:])
        bad |= turn > np.pi / 2
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0]) + 1
            raise SweepError(f"centerline bends too sharply for its radius at point {k}")
    s = cl.arclength
    diff = np.linalg.norm(p[:, None, :] - p[None, :, :], axis=2)
    reach = r[:, None] + r[None, :]
    far_along = np.abs(s[:, None] - s[None, :]) > np.pi * reach
    clash = far_along & (diff < reach)
    if np.any(clash):
        i, j = np.argwhere(clash)[0]
        raise SweepError(f"centerline sweep self-intersects between points {i} and {j}")


def sweep_tube(centerline: Centerline, segments_around: int = 32, spacing: float | None = None) -> TriMesh:
    """Closed tube around a single centerline with flat end caps.

    Cap faces carry tag 0 (start) and 1 (end).
    """
    if segments_around < 8:
        raise ValueError("segments_around must be >= 8")
    if spacing is None:
        spacing = 2.0 * np.pi * centerline.radii.min() / segments_around
    cl = centerline.resample(spacing)
    _check_sweep(cl, spacing)
    tang = cl.tangents()
    n_rings, n = len(cl.points), segments_around

    normal = _perpendicular(tang[0])
    frames = [normal]
    for i in range(1, n_rings):
        nv = frames[-1] - frames[-1].dot(tang[i]) * tang[i]
        frames.append(nv / np.linalg.norm(nv))
    frames = np.array(frames)
    binormal = np.cross(tang, frames)

    theta = 2.0 * np.pi * (np.arange(n) + 0.5) / n
    ring = (
        cl.points[:, None, :]
        + cl.radii[:, None, None]
        * (np.cos(theta)[None, :, None] * frames[:, None, :] + np.sin(theta)[None, :, None] * binormal[:, None, :])
    )
    verts = ring.reshape(-1, 3)

    i = np.arange(n_rings - 1)[:, None]
    j = np.arange(n)[None, :]
    a = i * n + j
    b = i * n + (j + 1) % n
    c = (i + 1) * n + j
    d = (i + 1) * n + (j + 1) % n
    side = np.concatenate([np.stack([a, b, d], -1).reshape(-1, 3), np.stack([a, d, c], -1).reshape(-1, 3)])

    c0 = len(verts)
    c1 = c0 + 1
    verts = np.vstack([verts, cl.points[0], cl.points[-1]])
    jj = np.arange(n)
    start_cap = np.stack([(jj + 1) % n, jj, np.full(n, c0)], axis=1)
    last = (n_rings - 1) * n
    end_cap = np.stack([last + jj, last + (jj + 1) % n, np.full(n, c1)], axis=1)

    faces = np.vstack([side, start_cap, end_cap])
    tags = np.concatenate([np.full(len(side), -1), np.zeros(n, int), np.ones(n, int)])
    mesh = TriMesh(verts, faces, tags)
    if signed_volume(mesh) < 0:
        mesh.faces = mesh.faces[:, ::-1].copy()
    return mesh


# -- bifurcating trees -------------------------------------------------------

def _polyline_field(x: np.ndarray, cl: Centerline) -> np.ndarray:
    """Distance to the tapered capsule chain minus the local radius."""
    out = np.full(len(x), np.inf)
    p, r = cl.points, cl.radii
    for k in range(len(p) - 1):
        a, b = p[k], p[k + 1]
        ab = b - a
        t = np.clip((x - a) @ ab / ab.dot(ab), 0.0, 1.0)
        proj = a + t[:, None] * ab
        rad = r[k] + t * (r[k + 1] - r[k])
        out = np.minimum(out, np.linalg.norm(x - proj, axis=1) - rad)
    return out


def _smooth_min(a: np.ndarray, b: np.ndarray, k: float) -> np.ndarray:
    h = np.maximum(k - np.abs(a - b), 0.0) / k
    return np.minimum(a, b) - h * h * k * 0.25


def _cut_and_cap(mesh: TriMesh, point: np.ndarray, normal: np.ndarray, radius: float, tag: int) -> TriMesh:
    """Remove the part of ``mesh`` beyond a plane, locally, and close it with a fan."""
    V, F = mesh.vertices, mesh.faces
    s = (V - point) @ normal
    local = np.linalg.norm(V - point, axis=1) < radius
    s = np.where(local, s, -1.0)
    s = np.where(np.abs(s) < 1e-9, -1e-9, s)
    pos = s > 0
    npos = pos[F].sum(axis=1)

    new_verts: list[np.ndarray] = []
    cache: dict[tuple[int, int], int] = {}

    def crossing(i, j):
        key = (i, j) if i < j else (j, i)
        if key not in cache:
            t = s[i] / (s[i] - s[j])
            new_verts.append(V[i] + t * (V[j] - V[i]))
            cache[key] = len(V) + len(new_verts) - 1
        return cache[key]

    out_faces = [F[npos == 0]]
    out_tags = [mesh.face_tags[npos == 0]]
    extra, extra_tags = [], []
    for f in np.flatnonzero((npos == 1) | (npos == 2)):
        tri = F[f]
        p = pos[tri]
        if p.sum() == 1:
            k = int(np.flatnonzero(p)[0])
            v0, v1, v2 = tri[(k + 1) % 3], tri[(k + 2) % 3], tri[k]
            p12, p20 = crossing(v1, v2), crossing(v2, v0)
            extra += [(v0, v1, p12), (v0, p12, p20)]
            extra_tags += [mesh.face_tags[f]] * 2
        else:
            k = int(np.flatnonzero(~p)[0])
            v0, v1, v2 = tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]
            extra.append((v0, crossing(v0, v1), crossing(v2, v0)))
            extra_tags.append(mesh.face_tags[f])
    if extra:
        out_faces.append(np.array(extra, dtype=np.int64))
        out_tags.append(np.array(extra_tags, dtype=np.int64))
    faces = np.vstack(out_faces)
    tags = np.concatenate(out_tags)
    verts = np.vstack([V] + ([np.array(new_verts)] if new_verts else []))

    on_plane = np.zeros(len(verts), dtype=bool)
    on_plane[len(V):] = True
    edges, counts, inv = edge_table(faces)
    half = np.stack([faces, np.roll(faces, -1, axis=1)], axis=-1).reshape(-1, 2)
    open_half = half[(counts[inv] == 1) & on_plane[half[:, 0]] & on_plane[half[:, 1]]]
    if len(open_half) < 3:
        raise MeshError("cap plane does not cut the vessel")
    loop_verts = np.unique(open_half)
    centre = verts[loop_verts].mean(axis=0)
    ci = len(verts)
    verts = np.vstack([verts, centre])
    cap = np.stack([open_half[:, 1], open_half[:, 0], np.full(len(open_half), ci)], axis=1)
    faces = np.vstack([faces, cap])
    tags = np.concatenate([tags, np.full(len(cap), tag)])
    return TriMesh(verts, faces, tags)


def vessel_tree(branches: list[Centerline], segments_around: int = 32, blend: float | None = None) -> TriMesh:
    """Watertight union of branch tubes with flat caps at every open end.

    ``branches[0]`` starts at the root opening; every later branch must start
    inside an earlier one (a junction). A branch end is an opening unless another
    branch starts there. Cap tags: root start is 0, then open ends in branch
    order.
    """
    if segments_around < 8:
        raise ValueError("segments_around must be >= 8")
    r_min = min(b.radii.min() for b in branches)
    h = 2.0 * np.pi * r_min / segments_around
    if blend is None:
        blend = 0.4 * r_min

    for k, br in enumerate(branches[1:], start=1):
        start = br.points[:1]
        inside = min(_polyline_field(start, b)[0] for b in branches[:k])
        if inside >= 0:
            raise ValueError(f"branch {k} does not start inside an earlier branch")

    starts = np.array([b.points[0] for b in branches[1:]]).reshape(-1, 3)

    def is_junction(k: int) -> bool:
        end, rad = branches[k].points[-1], branches[k].radii[-1]
        others = np.delete(starts, k - 1, axis=0) if k > 0 else starts
        return bool(len(others)) and bool(np.any(np.linalg.norm(others - end, axis=1) < 1.5 * rad))

    openings = []  # (point, outward normal, radius)
    root = branches[0]
    t0 = root.tangents()[0]
    openings.append((root.points[0], -t0, root.radii[0]))
    open_end = [not is_junction(k) for k in range(len(branches))]
    for br, is_open in zip(branches, open_end):
        if is_open:
            openings.append((br.points[-1], br.tangents()[-1], br.radii[-1]))

    extended = []
    for k, br in enumerate(branches):
        pts, rad = br.points, br.radii
        if open_end[k]:
            tail = pts[-1] + 1.5 * rad[-1] * br.tangents()[-1]
            pts = np.vstack([pts, tail])
            rad = np.append(rad, rad[-1])
        if k == 0:
            head = pts[0] - 1.5 * rad[0] * t0
            pts = np.vstack([head, pts])
            rad = np.insert(rad, 0, rad[0])
        extended.append(Centerline(pts, rad))

    allp = np.vstack([e.points for e in extended])
    rmax = max(e.radii.max() for e in extended)
    lo = allp.min(axis=0) - rmax - 3 * h
    hi = allp.max(axis=0) + rmax + 3 * h
    axes = [lo[k] + h * np.arange(int(np.ceil((hi[k] - lo[k]) / h)) + 1) for k in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    field = _polyline_field(grid, extended[0])
    for e in extended[1:]:
        field = _smooth_min(field, _polyline_field(grid, e), blend)
    field = field.reshape(len(axes[0]), len(axes[1]), len(axes[2]))

    verts, faces, _, _ = marching_cubes(field, level=0.0, spacing=(h, h, h), allow_degenerate=False)
    mesh = TriMesh(verts + lo, faces)
    mesh = check_and_repair(mesh)
    for tag, (pt, nrm, rad) in enumerate(openings):
        mesh = _cut_and_cap(mesh, pt, nrm / np.linalg.norm(nrm), 2.5 * rad, tag)
    return check_and_repair(mesh)


def build_vessel(centerline, segments_around: int = 32) -> TriMesh:
    """Closed vessel surface from one centerline or a list of branch centerlines."""
    if isinstance(centerline, Centerline):
        return sweep_tube(centerline, segments_around)
    branches = list(centerline)
    if len(branches) == 1:
        return sweep_tube(branches[0], segments_around)
    return vessel_tree(branches, segments_around)


def y_bifurcation(
    parent_length: float = 10.0,
    branch_length: float = 9.0,
    parent_radius: float = 2.0,
    branch_radius: float = 1.5,
    angle_deg: float = 35.0,
) -> list[Centerline]:
    """Parent along +z splitting symmetrically into two daughters in the xz-plane."""
    a = np.deg2rad(angle_deg)
    top = np.array([0.0, 0.0, parent_length])
    parent = Centerline([[0.0, 0.0, 0.0], top], [parent_radius, parent_radius])
    out = [parent]
    for sgn in (1.0, -1.0):
        d = np.array([sgn * np.sin(a), 0.0, np.cos(a)])
        start = top - 0.5 * parent_radius * np.array([0.0, 0.0, 1.0])
        out.append(Centerline([start, top + branch_length * d], [branch_radius, branch_radius]))
    return out


# -- primitives --------------------------------------------------------------

def icosphere(radius: float = 1.0, subdivisions: int = 3, center=(0.0, 0.0, 0.0)) -> TriMesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    v = np.array(
        [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t],
         [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]],
        dtype=np.float64,
    )
    f = np.array(
        [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
         [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
         [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]],
        dtype=np.int64,
    )
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    for _ in range(subdivisions):
        edges = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
        uniq, inv = np.unique(edges, axis=0, return_inverse=True)
        mid = v[uniq[:, 0]] + v[uniq[:, 1]]
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        m = len(v) + inv.reshape(3, -1).T  # midpoints of edges 01, 12, 20
        v = np.vstack([v, mid])
        a, b, c = f[:, 0], f[:, 1], f[:, 2]
        m01, m12, m20 = m[:, 0], m[:, 1], m[:, 2]
        f = np.vstack([
            np.stack([a, m01, m20], 1), np.stack([b, m12, m01], 1),
            np.stack([c, m20, m12], 1), np.stack([m01, m12, m20], 1),
        ])
    mesh = TriMesh(radius * v + np.asarray(center, dtype=np.float64), f)
    if signed_volume(mesh) < 0:
        mesh.faces = mesh.faces[:, ::-1].copy()
    return mesh


def box_mesh(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0), divisions: int = 1) -> TriMesh:
    """Axis-aligned box with each face split into ``divisions**2`` quads."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    n = divisions
    g = np.linspace(0.0, 1.0, n + 1)
    verts, faces = [], []
    for axis in range(3):
        u_ax, v_ax = [a for a in range(3) if a != axis]
        for side in (0.0, 1.0):
            uu, vv = np.meshgrid(g, g, indexing="ij")
            p = np.zeros((n + 1, n + 1, 3))
            p[..., axis] = side
            p[..., u_ax] = uu
            p[..., v_ax] = vv
            base = sum(len(x) for x in verts)
            verts.append(p.reshape(-1, 3))
            i = np.arange(n)[:, None]
            j = np.arange(n)[None, :]
            a = base + i * (n + 1) + j
            b = a + (n + 1)
            c = b + 1
            d = a + 1
            quad = np.concatenate([np.stack([a, b, c], -1).reshape(-1, 3), np.stack([a, c, d], -1).reshape(-1, 3)])
            faces.append(quad)
    V = np.vstack(verts) * (hi - lo) + lo
    mesh = TriMesh(V, np.vstack(faces))
    return check_and_repair(mesh, tol=1e-9 * max(1.0, float(np.max(hi - lo))))
