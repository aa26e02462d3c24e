"""Scalar hemodynamic summaries of one solved case."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..flowsolve.solver import FlowState


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class CaseSummary:
    case_id: int
    mdot: float
    v_max: float
    dp_star: float
    delta_v: float
    re: float
    converged: bool

    def __post_init__(self):
        vals = (self.mdot, self.v_max, self.dp_star, self.delta_v, self.re)
        if not all(np.isfinite(v) for v in vals):
            raise MetricError(f"case {self.case_id}: non-finite summary value")
        if self.v_max < 0 or self.dp_star < 0:
            raise MetricError(f"case {self.case_id}: v_max and dp_star must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def _cell_velocity(src) -> np.ndarray:
    if isinstance(src, FlowState):
        return src.cell_velocity().reshape(-1, 3)[src.ops.fluid_cells]
    return np.asarray(src, dtype=np.float64).reshape(-1, 3)


def _pressure(src) -> np.ndarray:
    if isinstance(src, FlowState):
        return src.p
    return np.asarray(src, dtype=np.float64).ravel()


def speed(src) -> np.ndarray:
    """Speed at every fluid cell centre (state) or every row of an ``(N, 3)`` array."""
    return np.linalg.norm(_cell_velocity(src), axis=1)


def max_velocity(src) -> float:
    s = speed(src)
    if s.size == 0:
        raise MetricError("empty fluid region")
    return float(s.max())


def _vmax_or_raise(vmax: float) -> float:
    if not vmax > 0:
        raise MetricError("V_max is zero; pressure normalisation is undefined")
    return vmax


def normalized_pressure(src, rho: float, vmax: float | None = None) -> np.ndarray:
    """P* = P / (rho V_max^2 / 2); V_max defaults to the state's own maximum speed."""
    if vmax is None:
        vmax = max_velocity(src)
    vmax = _vmax_or_raise(vmax)
    return _pressure(src) / (0.5 * rho * vmax**2)


def normalized_dp(src, rho: float, vmax: float | None = None) -> float:
    """Range of P* over the fluid cells."""
    ps = normalized_pressure(src, rho, vmax)
    return float(ps.max() - ps.min())


def reynolds(mdot: float, inlet_area_m2: float, rho: float, mu: float) -> float:
    """rho U D / mu with U the mean inlet speed and D the equivalent circular diameter."""
    U = mdot / (rho * inlet_area_m2)
    D = 2.0 * np.sqrt(inlet_area_m2 / np.pi)
    return float(rho * U * D / mu)


def mass_flux(state: FlowState, region, rho: float) -> float:
    """Mass flow (kg/s) through ``"inlet"``, ``"outlet"``, ``"wall"`` or one opening id.

    Inlet flux is counted positive into the domain, everything else positive outward.
    """
    ops = state.ops
    if region == "inlet":
        faces, sign = ops.inlet_faces, -1.0
    elif region == "outlet":
        faces, sign = ops.outlet_faces, 1.0
    elif region == "wall":
        faces, sign = ops.wall_faces, 1.0
    elif isinstance(region, (int, np.integer)):
        faces = np.concatenate([ops.inlet_faces, ops.outlet_faces])
        faces = faces[ops.face_patch[faces] == region]
        sign = -1.0 if region == ops.cells.inlet_id else 1.0
    else:
        raise MetricError(f"unknown region {region!r}")
    if faces.size == 0:
        raise MetricError(f"region {region!r} has no faces")
    flux = ops.face_normal_sign[faces] * state.q[faces]
    return float(sign * rho * flux.sum() * ops.h**2)


def summarize(case_id: int, mdot: float, state: FlowState, rho: float, mu: float, delta_v: float, converged: bool) -> CaseSummary:
    vmax = max_velocity(state)
    cells = state.ops.cells
    area = cells.opening(cells.inlet_id).area * 1e-6
    return CaseSummary(
        case_id=int(case_id),
        mdot=float(mdot),
        v_max=vmax,
        dp_star=normalized_dp(state, rho, vmax) if vmax > 0 else 0.0,
        delta_v=float(delta_v),
        re=reynolds(mdot, area, rho, mu) if mdot > 0 else 0.0,
        converged=bool(converged),
    )
