"""Steady incompressible flow on labeled voxel domains (MAC grid, PISO)."""

from .config import CANONICAL_FLOWS, MDOT_BAND, ConfigError, FlowCondition, FluidProps, SolverConfig, dump_config, load_config
from .io import load_checkpoint, read_trace, save_checkpoint, write_trace
from .operators import MacOperators, build_operators
from .probes import boundary_pressure, hagen_poiseuille, opening_pressures, pressure_drop, sample_velocity
from .solver import (
    CFLError,
    ConvergenceError,
    DivergenceError,
    FlowSolver,
    FlowState,
    PoissonError,
    PressureSolver,
    ResidualTrace,
    SolverError,
    cfl_number,
    divergence_field,
    inlet_velocity,
)

__all__ = [
    "CANONICAL_FLOWS", "MDOT_BAND", "ConfigError", "FlowCondition", "FluidProps", "SolverConfig", "dump_config",
    "load_config", "load_checkpoint", "read_trace", "save_checkpoint", "write_trace", "MacOperators",
    "build_operators", "boundary_pressure", "hagen_poiseuille", "opening_pressures", "pressure_drop",
    "sample_velocity", "CFLError", "ConvergenceError", "DivergenceError", "FlowSolver", "FlowState",
    "PoissonError", "PressureSolver", "ResidualTrace", "SolverError", "cfl_number", "divergence_field", "inlet_velocity",
]
