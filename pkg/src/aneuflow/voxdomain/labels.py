"""Openings, inlet choice and boundary-role labeling of voxel cells."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ..geomsynth.mesh import TriMesh, face_cross
from .grid import DomainError, Label, VoxelGrid

_SIX = ndimage.generate_binary_structure(3, 1)
_ALL = ndimage.generate_binary_structure(3, 3)


@dataclass(frozen=True)
class Opening:
    id: int
    area: float
    centroid: tuple[float, float, float]
    normal: tuple[float, float, float]

    @property
    def radius(self) -> float:
        return float(np.sqrt(self.area / np.pi))

    def to_dict(self) -> dict:
        return {"id": self.id, "area": self.area, "centroid": list(self.centroid), "normal": list(self.normal)}

    @classmethod
    def from_dict(cls, d: dict) -> "Opening":
        return cls(int(d["id"]), float(d["area"]), tuple(d["centroid"]), tuple(d["normal"]))


def detect_openings(mesh: TriMesh) -> list[Opening]:
    """One record per tagged end cap, ordered by cap id.

    ``normal`` is the unit outward normal of the cap (pointing out of the lumen).
    """
    ids = mesh.cap_ids()
    if not ids:
        raise DomainError("mesh has no tagged end caps; nothing to open")
    cross = face_cross(mesh)
    area = 0.5 * np.linalg.norm(cross, axis=1)
    cen = mesh.triangles().mean(axis=1)
    out = []
    for k in ids:
        sel = mesh.face_tags == k
        a = float(area[sel].sum())
        c = (cen[sel] * area[sel, None]).sum(axis=0) / a
        n = cross[sel].sum(axis=0)
        n /= np.linalg.norm(n)
        out.append(Opening(k, a, tuple(float(x) for x in c), tuple(float(x) for x in n)))
    return out


def select_inlet(openings) -> int:
    """Id of the largest opening; ties go to the lowest id."""
    ops = list(openings)
    if len(ops) < 2:
        raise DomainError(f"an inlet/outlet split needs at least 2 openings, got {len(ops)}")
    best = max(op.area for op in ops)
    return min(op.id for op in ops if op.area == best)


@dataclass
class CellLabelGrid:
    """Cell roles on a lattice plus, for INLET/OUTLET cells, the owning opening id."""

    grid: VoxelGrid
    labels: np.ndarray
    patch: np.ndarray
    openings: list[Opening] = field(default_factory=list)
    inlet_id: int = 0

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.grid.dims

    def count(self, label: Label) -> int:
        return int(np.count_nonzero(self.labels == label))

    def counts(self) -> dict[str, int]:
        return {lab.name: self.count(lab) for lab in Label}

    def opening(self, oid: int) -> Opening:
        for op in self.openings:
            if op.id == oid:
                return op
        raise KeyError(oid)

    @property
    def outlet_ids(self) -> list[int]:
        return [op.id for op in self.openings if op.id != self.inlet_id]

    def fluid(self) -> np.ndarray:
        return self.labels == Label.FLUID


def n_patches(mask: np.ndarray) -> int:
    return int(ndimage.label(mask, structure=_ALL)[1])


def label_cells(
    mask: VoxelGrid,
    openings,
    inlet_id: int,
    drop_islands: bool = False,
    min_fluid: int = 8,
) -> CellLabelGrid:
    """Assign FLUID/WALL/INLET/OUTLET/EXTERIOR roles.

    Lumen cells become FLUID. Exterior cells face-adjacent to FLUID become
    WALL, except those lying just beyond a cap plane (within ``sqrt(3) h``
    along its outward normal and within the cap radius plus ``h/2``), which
    become INLET or OUTLET according to the opening they belong to.
    """
    ops = list(openings)
    if inlet_id not in {op.id for op in ops}:
        raise DomainError(f"inlet id {inlet_id} is not among the openings {[op.id for op in ops]}")
    fluid = mask.values.astype(bool)
    lab, n = ndimage.label(fluid, structure=_SIX)
    if n == 0 or fluid.sum() < min_fluid:
        raise DomainError(f"degenerate fluid region ({int(fluid.sum())} cells)")
    if n > 1:
        sizes = np.bincount(lab.ravel())[1:]
        if not drop_islands:
            raise DomainError(f"fluid region is disconnected: {n} components with sizes {sorted(sizes.tolist(), reverse=True)[:5]}")
        fluid = lab == (np.argmax(sizes) + 1)
    if fluid[0].any() or fluid[-1].any() or fluid[:, 0].any() or fluid[:, -1].any() or fluid[:, :, 0].any() or fluid[:, :, -1].any():
        raise DomainError("fluid touches the grid boundary; pad the grid")

    shell = ndimage.binary_dilation(fluid, structure=_SIX) & ~fluid
    labels = np.full(mask.dims, Label.EXTERIOR, dtype=np.uint8)
    labels[fluid] = Label.FLUID
    labels[shell] = Label.WALL
    patch = np.full(mask.dims, -1, dtype=np.int16)

    h = mask.h
    idx = np.argwhere(shell)
    c = mask.origin + (idx + 0.5) * h
    for op in ops:
        o = np.asarray(op.centroid)
        nrm = np.asarray(op.normal)
        rel = c - o
        ax = rel @ nrm
        radial = np.linalg.norm(rel - ax[:, None] * nrm, axis=1)
        hit = (ax > 0) & (ax <= np.sqrt(3.0) * h) & (radial <= op.radius + 0.5 * h) & (patch[tuple(idx.T)] < 0)
        if not hit.any():
            raise DomainError(f"opening {op.id} produces no boundary cells at h={h}")
        sel = tuple(idx[hit].T)
        labels[sel] = Label.INLET if op.id == inlet_id else Label.OUTLET
        patch[sel] = op.id
    return CellLabelGrid(mask.like(mask.values.copy()), labels, patch, ops, inlet_id)


def check_labels(dom: CellLabelGrid) -> None:
    """Raise if any structural invariant of a labeled domain is violated."""
    fluid = dom.fluid()
    if ndimage.label(fluid, structure=_SIX)[1] != 1:
        raise DomainError("FLUID cells are not one 6-connected component")
    near = ndimage.binary_dilation(fluid, structure=_SIX)
    if np.any(near & (dom.labels == Label.EXTERIOR)):
        raise DomainError("a FLUID cell touches an EXTERIOR cell")
    if n_patches(dom.labels == Label.INLET) != 1:
        raise DomainError("expected exactly one INLET patch")
    if n_patches(dom.labels == Label.OUTLET) < 1:
        raise DomainError("expected at least one OUTLET patch")
