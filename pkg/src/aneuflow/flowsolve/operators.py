"""Discrete operators on a labeled staggered (MAC) grid.

Face values of all three components live in one flat vector ``q``:
``[u faces | v faces | w faces | 0]``. The trailing slot is a permanent zero
that gather indices point at when a neighbour contributes nothing.
Component ``a`` has face array shape ``dims + e_a``; face ``i`` along ``a``
sits between cells ``i-1`` and ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from ..voxdomain.grid import DomainError, Label
from ..voxdomain.labels import CellLabelGrid

F_DEAD, F_ACTIVE, F_WALL, F_INLET, F_OUTLET = 0, 1, 2, 3, 4
_BOUNDARY_OF = {Label.WALL: F_WALL, Label.INLET: F_INLET, Label.OUTLET: F_OUTLET}
_E = np.eye(3, dtype=np.int64)


def _padded_labels(labels: np.ndarray) -> np.ndarray:
    return np.pad(labels, 1, constant_values=Label.EXTERIOR)


@dataclass
class Stencil:
    """Neighbour description of the active nodes of one component, direction, sign."""

    nb: np.ndarray      # flat q index (or the zero slot)
    beta: np.ndarray    # coefficient on the node's own value
    gamma: np.ndarray   # constant term per unit inlet scale


@dataclass
class MacOperators:
    cells: CellLabelGrid
    h: float                       # metres
    dims: tuple[int, int, int]
    shapes: list[tuple[int, int, int]]
    offsets: np.ndarray            # start of each component in q
    n_q: int                       # length of q including the zero slot
    face_type: np.ndarray          # per q entry
    face_patch: np.ndarray         # opening id for INLET/OUTLET faces, else -1
    face_normal_sign: np.ndarray   # +1 if the fluid cell is on the low side of a boundary face (outflow = sign * q)
    active: list[np.ndarray]       # flat q indices of active nodes per component
    stencils: list[list[Stencil]]  # [component][2*d + (s>0)]
    advect: list[list[np.ndarray]] # [component][d] -> (n_active, 4) q indices (d != a), None for d == a
    fluid_index: np.ndarray        # cell -> unknown index or -1
    fluid_cells: np.ndarray        # flat cell indices of unknowns
    D: sparse.csr_matrix           # divergence: q -> fluid cells (1/m)
    G: sparse.csr_matrix           # gradient: fluid cells -> q (corrected faces only)
    corrected: np.ndarray          # q indices updated by the pressure correction
    inlet_faces: np.ndarray
    outlet_faces: np.ndarray
    outlet_source: np.ndarray      # opposite face of the same fluid cell, for zero-gradient outflow
    wall_faces: np.ndarray
    inlet_unit: np.ndarray         # inlet face velocity per unit volumetric flow (1/m^2)
    diag_coef: list[np.ndarray]    # per component, sum of diffusion weights (for the explicit bound)
    stats: dict = field(default_factory=dict)

    def component(self, q: np.ndarray, a: int) -> np.ndarray:
        s = self.offsets[a]
        return q[s:s + int(np.prod(self.shapes[a]))].reshape(self.shapes[a])

    @property
    def n_fluid(self) -> int:
        return len(self.fluid_cells)


def _face_cells(dims, a):
    """Label-array index pairs (low cell, high cell) for every face of component ``a`` (padded coords)."""
    shape = tuple(d + (1 if k == a else 0) for k, d in enumerate(dims))
    idx = np.indices(shape).reshape(3, -1).T
    hi = idx + 1           # padded coordinates of cell idx
    lo = hi - _E[a]
    return shape, idx, lo, hi


def _theta(s_node, s_nb, theta_min):
    with np.errstate(divide="ignore", invalid="ignore"):
        th = np.where((s_node < 0) & (s_nb > 0), s_node / (s_node - s_nb), 1.0)
    th = np.where(s_node >= 0, theta_min, th)
    return np.clip(th, theta_min, 1.0)


def build_operators(
    cells: CellLabelGrid,
    sdf: np.ndarray | None = None,
    wall_model: str = "ghost",
    theta_min: float = 0.1,
    inlet_profile: str = "plug",
) -> MacOperators:
    """Assemble MAC operators for a labeled domain (lattice in mm, operators in SI)."""
    dims = cells.dims
    h = cells.h * 1e-3
    L = _padded_labels(cells.labels)
    P = np.pad(cells.patch, 1, constant_values=-1)
    if wall_model == "ghost":
        if sdf is None:
            raise DomainError("ghost-fluid walls need the cell-centred signed distance field")
        S = np.pad(np.asarray(sdf, dtype=np.float64), 1, mode="edge")
    else:
        S = None

    shapes, offs, ftype, fpatch, fsign, fidx = [], [0], [], [], [], []
    for a in range(3):
        shape, idx, lo, hi = _face_cells(dims, a)
        Llo, Lhi = L[tuple(lo.T)], L[tuple(hi.T)]
        t = np.full(len(idx), F_DEAD, dtype=np.int8)
        pt = np.full(len(idx), -1, dtype=np.int64)
        sg = np.zeros(len(idx), dtype=np.int8)
        both = (Llo == Label.FLUID) & (Lhi == Label.FLUID)
        t[both] = F_ACTIVE
        for fluid_lo, other in ((True, Lhi), (False, Llo)):
            one = ((Llo == Label.FLUID) if fluid_lo else (Lhi == Label.FLUID)) & ~both
            for lab, ft in _BOUNDARY_OF.items():
                m = one & (other == lab)
                t[m] = ft
                sg[m] = 1 if fluid_lo else -1
                cpos = hi[m] if fluid_lo else lo[m]
                pt[m] = P[tuple(cpos.T)]
        shapes.append(shape)
        offs.append(offs[-1] + len(idx))
        ftype.append(t)
        fpatch.append(pt)
        fsign.append(sg)
        fidx.append(idx)
    n_faces = offs[3]
    zero = n_faces
    n_q = n_faces + 1
    offsets = np.array(offs[:3])
    face_type = np.concatenate(ftype + [np.array([F_DEAD], dtype=np.int8)])
    face_patch = np.concatenate(fpatch + [np.array([-1])])
    face_sign = np.concatenate(fsign + [np.array([0], dtype=np.int8)])

    def flat(a, idx):
        return offsets[a] + np.ravel_multi_index(tuple(idx.T), shapes[a])

    # inlet velocity vector per inlet-owned position (unit scale)
    ops = {op.id: op for op in cells.openings}
    inlet = ops[cells.inlet_id]
    n_in = np.asarray(inlet.normal)
    c_in = np.asarray(inlet.centroid) * 1e-3
    R_in = inlet.radius * 1e-3
    origin = cells.grid.origin * 1e-3

    def inlet_vec(pos):
        """Inflow velocity vectors at positions (m) per unit mean speed."""
        if inlet_profile == "plug":
            mag = np.ones(len(pos))
        else:
            rel = pos - c_in
            r2 = np.sum(rel**2, axis=1) - (rel @ n_in) ** 2
            mag = np.clip(2.0 * (1.0 - r2 / R_in**2), 0.0, None)
        return -mag[:, None] * n_in[None, :]

    def face_pos(a, idx):
        return origin + (idx + 0.5 - 0.5 * _E[a]) * h

    inlet_faces = np.flatnonzero(face_type == F_INLET)
    outlet_faces = np.flatnonzero(face_type == F_OUTLET)
    wall_faces = np.flatnonzero(face_type == F_WALL)
    inlet_unit = np.zeros(len(inlet_faces))
    comp_of = np.searchsorted(offsets, inlet_faces, side="right") - 1
    for a in range(3):
        sel = comp_of == a
        idx = np.array(np.unravel_index(inlet_faces[sel] - offsets[a], shapes[a])).T
        vec = inlet_vec(face_pos(a, idx))
        inlet_unit[sel] = vec[:, a]
    # normalise so that q_inlet = Q * inlet_unit carries exactly Q through the patch
    flux_in = np.sum(-inlet_unit * face_sign[inlet_faces]) * h * h
    if not flux_in > 0:
        raise DomainError("inlet patch carries no inflow through its faces")
    inlet_unit = inlet_unit / flux_in

    # outlet zero-gradient source: opposite face of the fluid cell, same component
    outlet_source = np.empty(len(outlet_faces), dtype=np.int64)
    comp_of = np.searchsorted(offsets, outlet_faces, side="right") - 1
    for a in range(3):
        sel = comp_of == a
        idx = np.array(np.unravel_index(outlet_faces[sel] - offsets[a], shapes[a])).T
        step = np.where(face_sign[outlet_faces[sel]] > 0, -1, 1)
        outlet_source[sel] = flat(a, idx + step[:, None] * _E[a])

    # active-node stencils
    active, stencils, advect, diag_coef = [], [], [], []
    n_ghost = 0
    for a in range(3):
        t = ftype[a]
        idx_all = fidx[a]
        act = np.flatnonzero(t == F_ACTIVE)
        idx = idx_all[act]
        active.append(offsets[a] + act)
        st_a = []
        dsum = np.zeros(len(act))
        if S is not None:
            s_node = 0.5 * (S[tuple((idx + 1 - _E[a]).T)] + S[tuple((idx + 1).T)]) * 1e-3
        for d in range(3):
            for s in (-1, 1):
                nidx = idx + s * _E[d]
                inb = np.all((nidx >= 0) & (nidx < np.array(shapes[a])), axis=1)
                nflat = np.full(len(act), zero, dtype=np.int64)
                nflat[inb] = flat(a, nidx[inb])
                ntype = face_type[nflat]
                beta = np.zeros(len(act))
                gamma = np.zeros(len(act))
                nb = np.full(len(act), zero, dtype=np.int64)
                w = np.ones(len(act))
                if d == a:
                    # normal neighbour: always a face of one of the node's cells
                    nb[:] = nflat
                else:
                    is_act = ntype == F_ACTIVE
                    nb[is_act] = nflat[is_act]
                    lo = nidx + 1 - _E[a]
                    hi = nidx + 1
                    l1, l2 = L[tuple(lo.T)], L[tuple(hi.T)]
                    has_in = ~is_act & ((l1 == Label.INLET) | (l2 == Label.INLET))
                    has_out = ~is_act & ~has_in & ((l1 == Label.OUTLET) | (l2 == Label.OUTLET))
                    wall = ~is_act & ~has_in & ~has_out
                    # tangential Dirichlet at the inlet plane, half a cell away
                    beta[has_in] = -1.0
                    gamma[has_in] = 2.0 * inlet_vec(face_pos(a, nidx[has_in]))[:, a] / flux_in
                    beta[has_out] = 1.0
                    if wall_model == "ghost":
                        s_nb = 0.5 * (S[tuple(lo[wall].T)] + S[tuple(hi[wall].T)]) * 1e-3
                        th = _theta(s_node[wall], s_nb, theta_min)
                    else:
                        th = np.full(int(wall.sum()), 0.5)
                    beta[wall] = -(1.0 - th) / th
                    w[wall] = 1.0 / th
                    n_ghost += int(wall.sum())
                st_a.append(Stencil(nb, beta, gamma))
                dsum += w
        stencils.append(st_a)
        diag_coef.append(dsum)
        adv = []
        for d in range(3):
            if d == a:
                adv.append(None)
                continue
            c_lo = idx - _E[a]
            c_hi = idx
            quad = np.stack([
                flat(d, c_lo), flat(d, c_lo + _E[d]), flat(d, c_hi), flat(d, c_hi + _E[d]),
            ], axis=1)
            adv.append(quad)
        advect.append(adv)

    # divergence and gradient
    fluid = cells.labels == Label.FLUID
    fluid_cells = np.flatnonzero(fluid.ravel())
    fluid_index = np.full(fluid.size, -1, dtype=np.int64)
    fluid_index[fluid_cells] = np.arange(len(fluid_cells))
    rows, cols, vals = [], [], []
    g_rows, g_cols, g_vals = [], [], []
    corrected = []
    for a in range(3):
        t = ftype[a]
        idx_all = fidx[a]
        keep = t != F_DEAD
        idx = idx_all[keep]
        q_idx = offsets[a] + np.flatnonzero(keep)
        lo_c = idx - _E[a]
        hi_c = idx
        for cpos, sign in ((lo_c, 1.0), (hi_c, -1.0)):
            ok = np.all((cpos >= 0) & (cpos < np.array(dims)), axis=1)
            ci = np.full(len(idx), -1, dtype=np.int64)
            ci[ok] = fluid_index[np.ravel_multi_index(tuple(cpos[ok].T), dims)]
            m = ci >= 0
            rows.append(ci[m])
            cols.append(q_idx[m])
            vals.append(np.full(int(m.sum()), sign / h))
        # gradient on active and outlet faces
        tt = t[keep]
        for ftp in (F_ACTIVE, F_OUTLET):
            m = tt == ftp
            f = q_idx[m]
            corrected.append(f)
            lo_ok = np.all(lo_c[m] >= 0, axis=1)
            hi_ok = np.all(hi_c[m] < np.array(dims), axis=1)
            ci_lo = np.full(int(m.sum()), -1, dtype=np.int64)
            ci_hi = np.full(int(m.sum()), -1, dtype=np.int64)
            ci_lo[lo_ok] = fluid_index[np.ravel_multi_index(tuple(lo_c[m][lo_ok].T), dims)]
            ci_hi[hi_ok] = fluid_index[np.ravel_multi_index(tuple(hi_c[m][hi_ok].T), dims)]
            if ftp == F_ACTIVE:
                g_rows += [f, f]
                g_cols += [ci_hi, ci_lo]
                g_vals += [np.full(len(f), 1.0 / h), np.full(len(f), -1.0 / h)]
            else:
                # Dirichlet p = 0 on the outlet face: ghost pressure is -p
                hi_f = ci_hi >= 0
                g_rows += [f[hi_f], f[~hi_f]]
                g_cols += [ci_hi[hi_f], ci_lo[~hi_f]]
                g_vals += [np.full(int(hi_f.sum()), 2.0 / h), np.full(int((~hi_f).sum()), -2.0 / h)]
    n_c = len(fluid_cells)
    D = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_c, n_q))
    G = sparse.csr_matrix(
        (np.concatenate(g_vals), (np.concatenate(g_rows), np.concatenate(g_cols))), shape=(n_q, n_c)
    )
    corrected = np.sort(np.concatenate(corrected))
    if len(outlet_faces) == 0:
        raise DomainError("domain has no outlet faces")
    stats = {
        "n_fluid": n_c,
        "n_active": [len(x) for x in active],
        "n_inlet_faces": len(inlet_faces),
        "n_outlet_faces": len(outlet_faces),
        "n_wall_faces": len(wall_faces),
        "n_ghost_links": n_ghost,
        "inlet_flux_per_unit_speed": float(flux_in),
    }
    return MacOperators(
        cells=cells, h=h, dims=dims, shapes=shapes, offsets=offsets, n_q=n_q, face_type=face_type,
        face_patch=face_patch, face_normal_sign=face_sign, active=active, stencils=stencils, advect=advect,
        fluid_index=fluid_index, fluid_cells=fluid_cells, D=D, G=G, corrected=corrected,
        inlet_faces=inlet_faces, outlet_faces=outlet_faces, outlet_source=outlet_source,
        wall_faces=wall_faces, inlet_unit=inlet_unit, diag_coef=diag_coef, stats=stats,
    )
