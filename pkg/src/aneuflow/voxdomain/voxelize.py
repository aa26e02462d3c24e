"""Inside/outside classification and exact signed distance on a lattice."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..geomsynth.mesh import TriMesh, edge_table
from .grid import DomainError, VoxelGrid


def _require_closed(mesh: TriMesh) -> None:
    _, counts, _ = edge_table(mesh.faces)
    if len(counts) == 0 or np.any(counts != 2):
        raise DomainError("voxelization needs a watertight mesh (every edge shared by exactly two faces)")


def _owns_edge(ex, ey):
    # top-left style tie rule for a CCW edge with direction (ex, ey)
    return (ey < 0) | ((ey == 0) & (ex > 0))


def _winding_along(mesh: TriMesh, grid: VoxelGrid, axis: int) -> np.ndarray:
    """Signed crossing count of rays cast along ``axis`` through every cell centre."""
    a1, a2 = [a for a in range(3) if a != axis]
    tri = mesh.triangles()
    P = tri[:, :, [a1, a2]]
    Z = tri[:, :, axis]
    ca = grid.axis_centers(a1)
    cb = grid.axis_centers(a2)
    cz = grid.axis_centers(axis)
    h = grid.h
    o = grid.origin

    area2 = (P[:, 1, 0] - P[:, 0, 0]) * (P[:, 2, 1] - P[:, 0, 1]) - (P[:, 1, 1] - P[:, 0, 1]) * (P[:, 2, 0] - P[:, 0, 0])
    keep = area2 != 0
    P, Z, area2 = P[keep], Z[keep], area2[keep]
    sgn = np.sign(area2).astype(np.int64)
    # reorder clockwise triangles so every projected triangle is CCW
    cw = sgn < 0
    P[cw] = P[cw][:, [0, 2, 1]]
    Z[cw] = Z[cw][:, [0, 2, 1]]

    lo = P.min(axis=1)
    hi = P.max(axis=1)
    i0 = np.clip(np.ceil((lo[:, 0] - o[a1]) / h - 0.5).astype(np.int64), 0, grid.dims[a1])
    i1 = np.clip(np.floor((hi[:, 0] - o[a1]) / h - 0.5).astype(np.int64) + 1, 0, grid.dims[a1])
    j0 = np.clip(np.ceil((lo[:, 1] - o[a2]) / h - 0.5).astype(np.int64), 0, grid.dims[a2])
    j1 = np.clip(np.floor((hi[:, 1] - o[a2]) / h - 0.5).astype(np.int64) + 1, 0, grid.dims[a2])
    ni = np.maximum(i1 - i0, 0)
    nj = np.maximum(j1 - j0, 0)
    cnt = ni * nj
    delta = np.zeros((grid.dims[a1], grid.dims[a2], grid.dims[axis] + 1), dtype=np.int64)
    if cnt.sum() == 0:
        return delta[..., :-1]

    t = np.repeat(np.arange(len(P)), cnt)
    start = np.repeat(np.cumsum(cnt) - cnt, cnt)
    local = np.arange(cnt.sum()) - start
    ii = i0[t] + local // nj[t]
    jj = j0[t] + local % nj[t]
    px = ca[ii]
    py = cb[jj]

    inside = np.ones(len(t), dtype=bool)
    lam = np.empty((len(t), 3))
    for k in range(3):
        a = P[t, k]
        b = P[t, (k + 1) % 3]
        ex = b[:, 0] - a[:, 0]
        ey = b[:, 1] - a[:, 1]
        e = ex * (py - a[:, 1]) - ey * (px - a[:, 0])
        inside &= (e > 0) | ((e == 0) & _owns_edge(ex, ey))
        lam[:, (k + 2) % 3] = e
    t, ii, jj, lam = t[inside], ii[inside], jj[inside], lam[inside]
    lam /= lam.sum(axis=1, keepdims=True)
    zc = np.einsum("ij,ij->i", lam, Z[t])
    kk = np.searchsorted(cz, zc, side="right")
    # outward faces seen from below (normal along -axis) mark entry
    np.add.at(delta, (ii, jj, kk), -sgn[t])
    wind = np.cumsum(delta, axis=2)[..., :-1]
    return np.moveaxis(wind, [0, 1, 2], [a1, a2, axis])


def voxelize(mesh: TriMesh, h: float | None = None, grid: VoxelGrid | None = None, pad: int = 2) -> VoxelGrid:
    """Binary lumen mask: 1 where the cell centre lies inside ``mesh``.

    Rays are cast through cell centres along all three axes; a cell is inside
    when at least two of the three signed crossing counts are non-zero.
    """
    _require_closed(mesh)
    if grid is None:
        if h is None:
            raise ValueError("voxelize needs a spacing h or an explicit grid")
        if not h > 0:
            raise DomainError(f"grid spacing must be positive, got {h}")
        lo, hi = mesh.bounds()
        grid = VoxelGrid.around(lo, hi, h, pad=pad)
    votes = np.zeros(grid.dims, dtype=np.int64)
    for axis in range(3):
        votes += _winding_along(mesh, grid, axis) != 0
    return grid.like((votes >= 2).astype(np.uint8))


# -- signed distance ---------------------------------------------------------

def point_triangle_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Euclidean distance from points to triangles, row-wise (closest-feature regions)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    closest = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def put(mask, q):
        m = mask & ~done
        closest[m] = q[m] if q.ndim == 2 else q
        done[m] = True

    with np.errstate(divide="ignore", invalid="ignore"):
        put((d1 <= 0) & (d2 <= 0), a)
        put((d3 >= 0) & (d4 <= d3), b)
        put((d6 >= 0) & (d5 <= d6), c)
        v = d1 / (d1 - d3)
        put((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v[:, None] * ab)
        w = d2 / (d2 - d6)
        put((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w[:, None] * ac)
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        put((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + w[:, None] * (c - b))
        denom = 1.0 / (va + vb + vc)
        v = vb * denom
        w = vc * denom
        put(np.ones(len(p), dtype=bool), a + v[:, None] * ab + w[:, None] * ac)
    return np.linalg.norm(p - closest, axis=1)


def _radius_buckets(rad: np.ndarray) -> list[np.ndarray]:
    """Split triangles into groups whose bounding radii differ by at most 2x."""
    key = np.floor(np.log2(np.maximum(rad, 1e-12) / rad.min())).astype(np.int64)
    return [np.flatnonzero(key == k) for k in np.unique(key)]


def unsigned_distance(mesh: TriMesh, points: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Exact distance from each point to the nearest triangle.

    A first pass over the nearest few triangle centroids gives an upper
    bound; every triangle whose bounding sphere reaches inside that bound is
    then tested exactly. Triangles are bucketed by size so that a few large
    cap triangles do not inflate the search radius for the rest.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tri = mesh.triangles()
    cen = tri.mean(axis=1)
    rad = np.linalg.norm(tri - cen[:, None, :], axis=2).max(axis=1)
    full = cKDTree(cen)
    buckets = [(ids, cKDTree(cen[ids]), float(rad[ids].max())) for ids in _radius_buckets(rad)]
    k = min(8, len(tri))
    out = np.empty(len(pts))
    for s in range(0, len(pts), chunk):
        p = pts[s:s + chunk]
        _, idx = full.query(p, k=k)
        idx = idx.reshape(len(p), k)
        rows = np.repeat(np.arange(len(p)), k)
        d = point_triangle_distance(p[rows], *(tri[idx.ravel(), m] for m in range(3))).reshape(len(p), k)
        best = d.min(axis=1)
        ub = best.copy()
        for ids, tree, rmax in buckets:
            cand = tree.query_ball_point(p, ub + rmax, return_sorted=False)
            lens = np.array([len(c) for c in cand], dtype=np.int64)
            if lens.sum() == 0:
                continue
            flat = ids[np.concatenate([c for c in cand if c]).astype(np.int64)]
            rows = np.repeat(np.arange(len(p)), lens)
            near = np.linalg.norm(p[rows] - cen[flat], axis=1) - rad[flat] <= ub[rows]
            rows, flat = rows[near], flat[near]
            dd = point_triangle_distance(p[rows], tri[flat, 0], tri[flat, 1], tri[flat, 2])
            np.minimum.at(best, rows, dd)
        out[s:s + chunk] = best
    return out


def signed_distance(mesh: TriMesh, grid: VoxelGrid, mask: VoxelGrid | None = None) -> VoxelGrid:
    """Signed distance (mm) at cell centres, negative inside the lumen.

    The sign follows the voxel mask so that ``sdf < 0`` exactly on lumen cells.
    """
    if mask is None:
        mask = voxelize(mesh, grid=grid)
    d = unsigned_distance(mesh, grid.centers().reshape(-1, 3)).reshape(grid.dims)
    return grid.like(np.where(mask.values.astype(bool), -d, d))
