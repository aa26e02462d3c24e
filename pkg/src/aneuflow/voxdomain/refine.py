"""Spacing series for grid-sensitivity studies."""

from __future__ import annotations

from dataclasses import dataclass

from ..geomsynth.mesh import TriMesh
from .grid import DomainError, Label, VoxelGrid
from .labels import CellLabelGrid, detect_openings, label_cells, select_inlet
from .voxelize import voxelize


class RefinementError(DomainError):
    def __init__(self, index: int, spacing: float, cause: Exception):
        super().__init__(f"spacing[{index}] = {spacing}: {cause}")
        self.index = index
        self.spacing = spacing


@dataclass
class LabeledDomain:
    mask: VoxelGrid
    cells: CellLabelGrid

    @property
    def h(self) -> float:
        return self.mask.h

    @property
    def n_fluid(self) -> int:
        return self.cells.count(Label.FLUID)


def build_domain(mesh: TriMesh, h: float, inlet_id: int | None = None, drop_islands: bool = False) -> LabeledDomain:
    """Voxelize ``mesh`` at spacing ``h`` and label boundary roles."""
    ops = detect_openings(mesh)
    if inlet_id is None:
        inlet_id = select_inlet(ops)
    mask = voxelize(mesh, h)
    return LabeledDomain(mask, label_cells(mask, ops, inlet_id, drop_islands=drop_islands))


def refinement_series(mesh: TriMesh, spacings) -> list[LabeledDomain]:
    spacings = [float(h) for h in spacings]
    if not spacings:
        raise ValueError("refinement_series needs at least one spacing")
    if any(b >= a for a, b in zip(spacings, spacings[1:])):
        raise ValueError(f"spacings must be strictly decreasing, got {spacings}")
    out = []
    for i, h in enumerate(spacings):
        try:
            out.append(build_domain(mesh, h))
        except (DomainError, ValueError) as exc:
            raise RefinementError(i, h, exc) from exc
    return out
