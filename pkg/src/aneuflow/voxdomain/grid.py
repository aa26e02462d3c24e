"""Uniform Cartesian lattices in millimetres."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np


class Label(IntEnum):
    EXTERIOR = 0
    FLUID = 1
    WALL = 2
    INLET = 3
    OUTLET = 4


class DomainError(ValueError):
    pass


@dataclass
class VoxelGrid:
    """Cell-centred scalar lattice.

    ``origin`` is the lower corner of cell (0, 0, 0); cell ``(i, j, k)`` has
    its centre at ``origin + (idx + 0.5) * h``.
    """

    origin: np.ndarray
    h: float
    dims: tuple[int, int, int]
    values: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.h = float(self.h)
        self.dims = tuple(int(d) for d in self.dims)
        if not self.h > 0:
            raise DomainError(f"grid spacing must be positive, got {self.h}")
        if min(self.dims) < 4:
            raise DomainError(f"grid dims must be >= 4 along every axis, got {self.dims}")
        if self.values is None:
            self.values = np.zeros(self.dims, dtype=np.float64)
        if self.values.shape != self.dims:
            raise DomainError(f"values shape {self.values.shape} does not match dims {self.dims}")
        if self.values.dtype.kind == "f" and not np.all(np.isfinite(self.values)):
            raise DomainError("grid values must be finite")

    @classmethod
    def around(cls, lo, hi, h: float, pad: int = 2) -> "VoxelGrid":
        """Grid whose cell corners sit on multiples of ``h`` and cover [lo, hi] plus ``pad`` cells."""
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        i0 = np.floor(lo / h + 1e-9).astype(np.int64) - pad
        i1 = np.ceil(hi / h - 1e-9).astype(np.int64) + pad
        dims = np.maximum(i1 - i0, 4)
        return cls(i0 * h, h, tuple(dims))

    def like(self, values: np.ndarray) -> "VoxelGrid":
        return VoxelGrid(self.origin.copy(), self.h, self.dims, values)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.dims))

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.dims[axis]) + 0.5) * self.h

    def centers(self) -> np.ndarray:
        """All cell centres, shape ``dims + (3,)``."""
        g = np.meshgrid(*(self.axis_centers(a) for a in range(3)), indexing="ij")
        return np.stack(g, axis=-1)

    def diagonal(self) -> float:
        return float(np.linalg.norm(np.asarray(self.dims) * self.h))

    def sidecar(self) -> dict:
        return {"origin": [float(x) for x in self.origin], "spacing": self.h, "dims": list(self.dims)}
