"""Fluid properties, flow conditions and solver settings."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

import tomli

MDOT_BAND = (0.0005, 0.005)
CANONICAL_FLOWS = (0.0010, 0.0015, 0.0020, 0.0025, 0.0030, 0.0035, 0.00375, 0.0040)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FluidProps:
    rho: float = 1050.0
    mu: float = 0.00345

    def __post_init__(self):
        if not (self.rho > 0 and self.mu > 0):
            raise ConfigError(f"rho and mu must be positive, got rho={self.rho}, mu={self.mu}")

    @property
    def nu(self) -> float:
        return self.mu / self.rho


@dataclass(frozen=True)
class FlowCondition:
    """Inlet mass flow in kg/s. ``mdot = 0`` is allowed as the null forcing."""

    mdot: float

    def __post_init__(self):
        if self.mdot != 0 and not (MDOT_BAND[0] <= self.mdot <= MDOT_BAND[1]):
            raise ConfigError(f"mdot={self.mdot} kg/s is outside the sanity band {MDOT_BAND}")


@dataclass
class SolverConfig:
    dt: float | None = None
    dt_max: float = 1e-4
    cfl_target: float = 0.5
    max_steps: int = 20000
    n_correctors: int = 2
    tol_velocity: float = 1e-7
    tol_pressure: float = 1e-5
    cfl_limit: float = 1.0
    convection_enabled: bool = True
    poisson_tol: float = 1e-8
    poisson_maxiter: int = 10000
    poisson_method: str = "direct"
    inlet_profile: str = "plug"
    wall_model: str = "ghost"
    theta_min: float = 0.1
    check_every: int = 1

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.dt_max > 0:
            raise ConfigError("dt_max must be positive")
        if not 0 < self.cfl_limit <= 1:
            raise ConfigError(f"cfl_limit must lie in (0, 1], got {self.cfl_limit}")
        if not 0 < self.cfl_target < self.cfl_limit + 1e-12:
            raise ConfigError("cfl_target must lie in (0, cfl_limit]")
        if self.n_correctors < 1:
            raise ConfigError("n_correctors must be >= 1")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if self.poisson_method not in ("cg-jacobi", "cg-amg", "direct"):
            raise ConfigError(f"unknown poisson_method {self.poisson_method!r}")
        if self.inlet_profile not in ("plug", "parabolic"):
            raise ConfigError(f"unknown inlet_profile {self.inlet_profile!r}")
        if self.wall_model not in ("ghost", "staircase"):
            raise ConfigError(f"unknown wall_model {self.wall_model!r}")
        if not 0 < self.theta_min <= 1:
            raise ConfigError("theta_min must lie in (0, 1]")

    @classmethod
    def faithful_preset(cls, **kw) -> "SolverConfig":
        """Fixed 1e-5 s pseudo step and 1e5 steps."""
        base = dict(dt=1e-5, max_steps=100_000)
        base.update(kw)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {"fluid": FluidProps, "solver": SolverConfig}


def _strict(cls, table: dict, where: str):
    known = {f.name for f in fields(cls)}
    extra = set(table) - known
    if extra:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(extra))}")
    return cls(**table)


def load_config(path) -> tuple[FluidProps, SolverConfig, dict]:
    """Read ``[fluid]`` and ``[solver]`` tables from a TOML file.

    Unknown keys are rejected; any other top-level table is returned as-is.
    """
    with open(Path(path), "rb") as fh:
        try:
            data = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    fluid = _strict(FluidProps, data.pop("fluid", {}), "fluid")
    solver = _strict(SolverConfig, data.pop("solver", {}), "solver")
    return fluid, solver, data


def dump_config(fluid: FluidProps, solver: SolverConfig) -> str:
    """TOML text for the two tables (``None`` values are omitted)."""
    out = []
    for name, obj in (("fluid", fluid), ("solver", solver)):
        out.append(f"[{name}]")
        for k, v in asdict(obj).items():
            if v is None:
                continue
            if isinstance(v, bool):
                out.append(f"{k} = {'true' if v else 'false'}")
            elif isinstance(v, str):
                out.append(f'{k} = "{v}"')
            else:
                out.append(f"{k} = {v!r}")
        out.append("")
    return "\n".join(out)
