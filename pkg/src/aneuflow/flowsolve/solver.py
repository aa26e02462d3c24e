"""Pseudo-transient PISO stepping on the MAC grid."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from ..voxdomain.grid import DomainError, Label
from ..voxdomain.labels import CellLabelGrid
from .config import FlowCondition, FluidProps, SolverConfig
from .operators import F_ACTIVE, MacOperators, build_operators


class SolverError(RuntimeError):
    pass


class PoissonError(SolverError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class CFLError(SolverError):
    def __init__(self, cfl, limit, safe_dt):
        super().__init__(f"CFL {cfl:.4g} >= limit {limit:g}; use dt <= {safe_dt:.4e} s")
        self.cfl = cfl
        self.safe_dt = safe_dt


class DivergenceError(SolverError):
    def __init__(self, step, trace=None):
        super().__init__(f"non-finite values at step {step}")
        self.step = step
        self.trace = trace


class ConvergenceError(SolverError):
    def __init__(self, message, state=None, trace=None):
        super().__init__(message)
        self.state = state
        self.trace = trace


@dataclass
class ResidualTrace:
    rows: list[tuple[int, float, float, float, float, float]] = field(default_factory=list)

    def append(self, step, r, cfl):
        self.rows.append((int(step), float(r[0]), float(r[1]), float(r[2]), float(r[3]), float(cfl)))

    def __len__(self):
        return len(self.rows)

    def array(self) -> np.ndarray:
        return np.asarray(self.rows, dtype=np.float64).reshape(-1, 6)

    def last(self):
        return self.rows[-1] if self.rows else None


@dataclass
class FlowState:
    ops: MacOperators = field(repr=False)
    q: np.ndarray = field(repr=False)
    p: np.ndarray = field(repr=False)
    step: int = 0
    trace: ResidualTrace = field(default_factory=ResidualTrace, repr=False)

    def copy(self) -> "FlowState":
        return FlowState(self.ops, self.q.copy(), self.p.copy(), self.step, ResidualTrace(list(self.trace.rows)))

    @property
    def u(self) -> np.ndarray:
        return self.ops.component(self.q, 0)

    @property
    def v(self) -> np.ndarray:
        return self.ops.component(self.q, 1)

    @property
    def w(self) -> np.ndarray:
        return self.ops.component(self.q, 2)

    def pressure_grid(self, fill: float = 0.0) -> np.ndarray:
        out = np.full(int(np.prod(self.ops.dims)), fill)
        out[self.ops.fluid_cells] = self.p
        return out.reshape(self.ops.dims)

    def cell_velocity(self) -> np.ndarray:
        """Face-averaged velocity at cell centres, shape ``dims + (3,)``."""
        u, v, w = self.u, self.v, self.w
        return np.stack([0.5 * (u[1:] + u[:-1]), 0.5 * (v[:, 1:] + v[:, :-1]), 0.5 * (w[:, :, 1:] + w[:, :, :-1])], -1)


class PressureSolver:
    """SPD solve for the pressure correction.

    ``cg-jacobi`` is diagonal-preconditioned CG, ``cg-amg`` uses a smoothed
    aggregation V-cycle as the CG preconditioner, ``direct`` factorises once.
    """

    def __init__(self, A: sparse.csr_matrix, method: str, tol: float, maxiter: int):
        self.A = A.tocsr()
        self.method = method
        self.tol = tol
        self.maxiter = maxiter
        self.last_iterations = 0
        if method == "cg-jacobi":
            self.M = sparse.diags(1.0 / self.A.diagonal())
        elif method == "cg-amg":
            import pyamg

            self.M = pyamg.smoothed_aggregation_solver(self.A, symmetry="symmetric").aspreconditioner(cycle="V")
        elif method == "direct":
            self.lu = spla.splu(self.A.tocsc(), permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True})
        else:
            raise ValueError(method)

    def solve(self, b: np.ndarray, atol: float = 0.0) -> np.ndarray:
        nb = float(np.linalg.norm(b))
        if nb == 0.0 or nb <= atol:
            self.last_iterations = 0
            return np.zeros_like(b)
        if self.method == "direct":
            self.last_iterations = 1
            x = self.lu.solve(b)
        else:
            count = [0]

            def cb(_):
                count[0] += 1

            x, info = spla.cg(self.A, b, rtol=self.tol, atol=atol, maxiter=self.maxiter, M=self.M, callback=cb)
            self.last_iterations = count[0]
            if info != 0:
                res = float(np.linalg.norm(b - self.A @ x))
                raise PoissonError(f"pressure CG did not converge in {self.maxiter} iterations (|r| = {res:.3e})", res)
        return x


class FlowSolver:
    """Steady incompressible Newtonian flow on one labeled domain and one inflow."""

    def __init__(
        self,
        cells: CellLabelGrid,
        props: FluidProps,
        flow: FlowCondition,
        config: SolverConfig,
        sdf: np.ndarray | None = None,
        ops: MacOperators | None = None,
    ):
        self.props = props
        self.flow = flow
        self.cfg = config
        self.ops = ops if ops is not None else build_operators(
            cells, sdf, wall_model=config.wall_model, theta_min=config.theta_min, inlet_profile=config.inlet_profile
        )
        if self.ops.stats["inlet_flux_per_unit_speed"] <= 0:
            raise DomainError("inlet area is zero")
        self.Q = flow.mdot / props.rho
        self.A = (-(self.ops.D @ self.ops.G)).tocsr()
        self.poisson = PressureSolver(self.A, config.poisson_method, config.poisson_tol, config.poisson_maxiter)
        self.dt = config.dt if config.dt is not None else self.auto_dt()

    # -- setup ------------------------------------------------------------

    @property
    def inlet_speed(self) -> float:
        """Mean inflow speed U = mdot / (rho A_eff) over the discrete inlet patch."""
        return self.Q / self.ops.stats["inlet_flux_per_unit_speed"]

    def auto_dt(self) -> float:
        h = self.ops.h
        nu = self.props.nu
        u_peak = 2.0 * float(np.max(np.abs(self.Q * self.ops.inlet_unit))) if self.Q > 0 else 0.0
        dmax = max(float(d.max()) for d in self.ops.diag_coef if len(d))
        bound = 0.9 / (nu * dmax / h**2 + 2.0 * u_peak / h)
        dt = min(self.cfg.dt_max, bound)
        if u_peak > 0:
            dt = min(dt, self.cfg.cfl_target * h / u_peak)
        return dt

    def initial_state(self) -> FlowState:
        st = FlowState(self.ops, np.zeros(self.ops.n_q), np.zeros(self.ops.n_fluid))
        return self.apply_boundary_conditions(st)

    # -- operations -------------------------------------------------------

    def apply_boundary_conditions(self, state: FlowState) -> FlowState:
        ops = self.ops
        state.q[ops.inlet_faces] = self.Q * ops.inlet_unit
        state.q[ops.wall_faces] = 0.0
        state.q[-1] = 0.0
        return state

    def momentum_predict(self, state: FlowState, dt: float | None = None) -> np.ndarray:
        """Provisional face velocities from one explicit pseudo-step."""
        dt = self.dt if dt is None else dt
        ops = self.ops
        q = state.q
        h = ops.h
        nu = self.props.nu
        gp = ops.G @ state.p
        qs = q.copy()
        for a in range(3):
            act = ops.active[a]
            x = q[act]
            lap = np.zeros_like(x)
            conv = np.zeros_like(x)
            for d in range(3):
                lo = ops.stencils[a][2 * d]
                hi = ops.stencils[a][2 * d + 1]
                g_lo = q[lo.nb] + lo.beta * x + lo.gamma * self.Q
                g_hi = q[hi.nb] + hi.beta * x + hi.gamma * self.Q
                lap += g_lo + g_hi - 2.0 * x
                if self.cfg.convection_enabled:
                    vel = x if d == a else 0.25 * q[ops.advect[a][d]].sum(axis=1)
                    conv += np.where(vel > 0, vel * (x - g_lo), vel * (g_hi - x)) / h
            qs[act] = x + dt * (nu * lap / h**2 - conv - gp[act] / self.props.rho)
        qs[ops.outlet_faces] = qs[ops.outlet_source]
        if not np.all(np.isfinite(qs)):
            raise DivergenceError(state.step + 1, state.trace)
        return qs

    def piso_correct(self, state: FlowState, qs: np.ndarray, dt: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Pressure-correction sweeps; returns corrected faces and the pressure increment."""
        dt = self.dt if dt is None else dt
        ops = self.ops
        rho = self.props.rho
        q = qs.copy()
        p_inc = np.zeros(ops.n_fluid)
        atol = 0.0
        for k in range(self.cfg.n_correctors):
            b = -(rho / dt) * (ops.D @ q)
            if k == 0:
                atol = self.cfg.poisson_tol * float(np.linalg.norm(b))
            dp = self.poisson.solve(b, atol=atol)
            q[ops.corrected] -= (dt / rho) * (ops.G @ dp)[ops.corrected]
            p_inc += dp
        return q, p_inc

    def cfl(self, q: np.ndarray, dt: float | None = None) -> float:
        dt = self.dt if dt is None else dt
        return cfl_number(float(np.max(np.abs(q))), dt, self.ops.h)

    def _check_cfl(self, q, dt):
        c = self.cfl(q, dt)
        if c >= self.cfg.cfl_limit:
            umax = float(np.max(np.abs(q)))
            raise CFLError(c, self.cfg.cfl_limit, self.ops.h * self.cfg.cfl_limit / umax)
        return c

    def residuals(self, q_old, q_new, p_old, p_new) -> tuple[float, float, float, float]:
        eps = 1e-300
        vmag = max(float(np.linalg.norm(q_new)), eps)
        out = []
        for a in range(3):
            s = self.ops.offsets[a]
            e = s + int(np.prod(self.ops.shapes[a]))
            out.append(float(np.linalg.norm(q_new[s:e] - q_old[s:e])) / vmag)
        out.append(float(np.linalg.norm(p_new - p_old)) / max(float(np.linalg.norm(p_new)), eps))
        return tuple(out)

    def step(self, state: FlowState, dt: float | None = None) -> tuple[FlowState, tuple, float]:
        """BC, predictor, PISO; the input state is left untouched."""
        dt = self.dt if dt is None else dt
        self.apply_boundary_conditions(state)
        self._check_cfl(state.q, dt)
        qs = self.momentum_predict(state, dt)
        q_new, p_inc = self.piso_correct(state, qs, dt)
        p_new = state.p + p_inc
        if not (np.all(np.isfinite(q_new)) and np.all(np.isfinite(p_new))):
            raise DivergenceError(state.step + 1, state.trace)
        c = self._check_cfl(q_new, dt)
        r = self.residuals(state.q, q_new, state.p, p_new)
        new = FlowState(self.ops, q_new, p_new, state.step + 1, state.trace)
        new.trace.append(new.step, r, c)
        return new, r, c

    def run_to_steady(self, state: FlowState | None = None, raise_on_fail: bool = True, log_every: int = 0):
        """Step until velocity and pressure residuals reach their targets.

        Returns ``(state, converged)``; the residual trace rides on the state.
        """
        state = self.initial_state() if state is None else state
        cfg = self.cfg
        t0 = time.perf_counter()
        converged = False
        for _ in range(cfg.max_steps):
            state, r, c = self.step(state)
            if max(r[:3]) <= cfg.tol_velocity and r[3] <= cfg.tol_pressure:
                converged = True
                break
            if log_every and state.step % log_every == 0:
                print(f"step {state.step}: r_u={r[0]:.2e} r_v={r[1]:.2e} r_w={r[2]:.2e} r_p={r[3]:.2e} cfl={c:.3f}")
        self.elapsed = time.perf_counter() - t0
        if not converged and raise_on_fail:
            raise ConvergenceError(f"no steady state within {cfg.max_steps} steps", state, state.trace)
        return state, converged

    # -- diagnostics ------------------------------------------------------

    def divergence(self, state: FlowState) -> np.ndarray:
        return self.ops.D @ state.q

    def divergence_bound(self) -> float:
        """Largest admissible cell |div u| after a converged pressure solve."""
        U = max(self.inlet_speed, 1e-12)
        return self.cfg.poisson_tol * U / self.ops.h * max(1.0, np.sqrt(self.ops.n_fluid))

    def boundary_flux(self, state: FlowState) -> dict[int, float]:
        """Volumetric outflow (m^3/s) per opening id; negative means inflow."""
        ops = self.ops
        out = {}
        for faces in (ops.inlet_faces, ops.outlet_faces):
            flux = ops.face_normal_sign[faces] * state.q[faces] * ops.h**2
            for oid in np.unique(ops.face_patch[faces]):
                out[int(oid)] = float(flux[ops.face_patch[faces] == oid].sum())
        return out


def divergence_field(state: FlowState) -> np.ndarray:
    """Cell divergence of the face velocity field on the full lattice (zero off the fluid)."""
    ops = state.ops
    out = np.zeros(int(np.prod(ops.dims)))
    out[ops.fluid_cells] = ops.D @ state.q
    return out.reshape(ops.dims)


def inlet_velocity(mdot: float, rho: float, area: float) -> float:
    """Uniform inflow speed U = mdot / (rho A)."""
    if not area > 0:
        raise DomainError(f"inlet area must be positive, got {area}")
    return mdot / (rho * area)


def cfl_number(umax: float, dt: float, h: float) -> float:
    """|u|max dt / h (SI units)."""
    return umax * dt / h
