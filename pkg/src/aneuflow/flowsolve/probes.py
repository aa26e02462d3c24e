"""Point sampling and boundary averages of a solved flow state."""

from __future__ import annotations

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .operators import _E
from .solver import FlowState


def _component_axes(state: FlowState, a: int):
    ops = state.ops
    h = ops.h
    origin = ops.cells.grid.origin * 1e-3
    axes = []
    for d in range(3):
        n = ops.shapes[a][d]
        if d == a:
            axes.append(origin[d] + np.arange(n) * h)
        else:
            axes.append(origin[d] + (np.arange(n) + 0.5) * h)
    return axes


def sample_velocity(state: FlowState, points_mm) -> np.ndarray:
    """Trilinear interpolation of each staggered component at points given in mm."""
    pts = np.atleast_2d(np.asarray(points_mm, dtype=np.float64)) * 1e-3
    out = np.empty((len(pts), 3))
    for a, comp in enumerate((state.u, state.v, state.w)):
        f = RegularGridInterpolator(_component_axes(state, a), comp, bounds_error=True)
        out[:, a] = f(pts)
    return out


def boundary_pressure(state: FlowState, faces: np.ndarray) -> np.ndarray:
    """Face pressure on boundary faces by linear extrapolation from the two nearest fluid cells."""
    ops = state.ops
    P = state.pressure_grid(fill=np.nan)
    out = np.empty(len(faces))
    comp_of = np.searchsorted(ops.offsets, faces, side="right") - 1
    for a in range(3):
        sel = comp_of == a
        if not sel.any():
            continue
        idx = np.array(np.unravel_index(faces[sel] - ops.offsets[a], ops.shapes[a])).T
        sign = ops.face_normal_sign[faces[sel]]
        # fluid cell and the next one further inside
        c1 = np.where((sign > 0)[:, None], idx - _E[a], idx)
        c2 = c1 - sign[:, None] * _E[a]
        p1 = P[tuple(c1.T)]
        ok = np.all((c2 >= 0) & (c2 < np.array(ops.dims)), axis=1)
        p2 = np.full(len(c1), np.nan)
        p2[ok] = P[tuple(c2[ok].T)]
        out[sel] = np.where(np.isfinite(p2), 1.5 * p1 - 0.5 * p2, p1)
    return out


def opening_pressures(state: FlowState) -> dict[int, float]:
    """Area-averaged pressure (Pa) on every opening; outlets are 0 by construction."""
    ops = state.ops
    out = {}
    faces = ops.inlet_faces
    out[int(ops.cells.inlet_id)] = float(np.mean(boundary_pressure(state, faces)))
    for oid in ops.cells.outlet_ids:
        out[int(oid)] = 0.0
    return out


def pressure_drop(state: FlowState) -> float:
    """Inlet minus mean outlet pressure (Pa), area-averaged over boundary faces."""
    pr = opening_pressures(state)
    inlet = pr.pop(int(state.ops.cells.inlet_id))
    return inlet - (np.mean(list(pr.values())) if pr else 0.0)


def hagen_poiseuille(mdot: float, radius_m: float, length_m: float, rho: float = 1050.0, mu: float = 0.00345) -> dict:
    """Analytic fully developed pipe flow: mean and centreline speed, pressure drop, Reynolds number."""
    Q = mdot / rho
    area = np.pi * radius_m**2
    U = Q / area
    return {
        "Q": Q,
        "U_mean": U,
        "U_max": 2.0 * U,
        "dp": 8.0 * mu * length_m * Q / (np.pi * radius_m**4),
        "Re": rho * U * 2.0 * radius_m / mu,
    }
