"""Row-aligned field tables for the inlet, internal, outlet and wall regions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..flowsolve.operators import _E
from ..flowsolve.probes import boundary_pressure
from ..flowsolve.solver import FlowState

REGIONS = ("inlet", "internal", "outlet", "wall")
COLUMNS = ("x", "y", "z", "u", "v", "w", "p")


@dataclass
class RegionFields:
    region: str
    xyz: np.ndarray   # (N, 3) mm
    uvw: np.ndarray   # (N, 3) m/s
    p: np.ndarray     # (N,) Pa

    def __post_init__(self):
        if self.region not in REGIONS:
            raise ValueError(f"unknown region {self.region!r}")
        n = len(self.xyz)
        if self.xyz.shape != (n, 3) or self.uvw.shape != (n, 3) or self.p.shape != (n,):
            raise ValueError(f"{self.region}: columns are not row-aligned")

    def __len__(self):
        return len(self.p)

    def as_array(self) -> np.ndarray:
        """``(N, 7)`` float64 table with columns x, y, z, u, v, w, p."""
        return np.column_stack([self.xyz, self.uvw, self.p]).astype(np.float64)

    @classmethod
    def from_array(cls, region: str, arr: np.ndarray) -> "RegionFields":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 7:
            raise ValueError(f"{region}: expected an (N, 7) table, got {arr.shape}")
        return cls(region, arr[:, :3].copy(), arr[:, 3:6].copy(), arr[:, 6].copy())

    def equals(self, other: "RegionFields") -> bool:
        return self.region == other.region and self.as_array().tobytes() == other.as_array().tobytes()


def _order(xyz: np.ndarray) -> np.ndarray:
    return np.lexsort((xyz[:, 0], xyz[:, 1], xyz[:, 2]))


def _faces_table(state: FlowState, faces: np.ndarray):
    """Face centres (mm), velocity vectors and the fluid cell each face belongs to."""
    ops = state.ops
    origin = ops.cells.grid.origin
    h_mm = ops.cells.grid.h
    cell_vel = state.cell_velocity()
    xyz = np.empty((len(faces), 3))
    uvw = np.empty((len(faces), 3))
    comp_of = np.searchsorted(ops.offsets, faces, side="right") - 1
    for a in range(3):
        sel = comp_of == a
        if not sel.any():
            continue
        idx = np.array(np.unravel_index(faces[sel] - ops.offsets[a], ops.shapes[a])).T
        xyz[sel] = origin + (idx + 0.5 - 0.5 * _E[a]) * h_mm
        cell = np.where((ops.face_normal_sign[faces[sel]] > 0)[:, None], idx - _E[a], idx)
        vel = cell_vel[tuple(cell.T)]
        vel[:, a] = state.q[faces[sel]]
        uvw[sel] = vel
    return xyz, uvw


def extract_region_fields(state: FlowState) -> dict[str, RegionFields]:
    """Internal rows are fluid cell centres; boundary rows are boundary face centres.

    Boundary faces take the normal velocity from the face and the tangential
    components from the adjacent cell. Wall rows are exactly zero velocity and
    carry the adjacent cell pressure; outlet rows carry the imposed 0 Pa.
    Rows are sorted by (z, y, x).
    """
    ops = state.ops
    out = {}
    centers = ops.cells.grid.centers().reshape(-1, 3)[ops.fluid_cells]
    vel = state.cell_velocity().reshape(-1, 3)[ops.fluid_cells]
    o = _order(centers)
    out["internal"] = RegionFields("internal", centers[o], vel[o], state.p[o].copy())

    P = state.pressure_grid(fill=np.nan)
    for name, faces in (("inlet", ops.inlet_faces), ("outlet", ops.outlet_faces), ("wall", ops.wall_faces)):
        xyz, uvw = _faces_table(state, faces)
        if name == "inlet":
            p = boundary_pressure(state, faces)
        elif name == "outlet":
            p = np.zeros(len(faces))
        else:
            uvw[:] = 0.0
            p = np.empty(len(faces))
            comp_of = np.searchsorted(ops.offsets, faces, side="right") - 1
            for a in range(3):
                sel = comp_of == a
                idx = np.array(np.unravel_index(faces[sel] - ops.offsets[a], ops.shapes[a])).T
                cell = np.where((ops.face_normal_sign[faces[sel]] > 0)[:, None], idx - _E[a], idx)
                p[sel] = P[tuple(cell.T)]
        o = _order(xyz)
        out[name] = RegionFields(name, xyz[o], uvw[o], p[o])
    return out
