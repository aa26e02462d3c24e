"""Pipeline configuration: one strict TOML document, validated before any stage runs."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import tomli

from ..caselib import ROOT_ENV
from ..evalbench import KINDS, SplitError, SplitSpec
from ..flowsolve import CANONICAL_FLOWS, ConfigError, FlowCondition, FluidProps, SolverConfig
from ..surrogate import ModelConfig, TrainConfig

PRESETS = ("desk", "paper-faithful")
FAMILIES = ("aneurysm", "poiseuille")


@dataclass(frozen=True)
class GeometryConfig:
    family: str = "aneurysm"
    n_base: int = 2               # base vessels
    k_deform: int = 3             # deformed copies per base vessel
    length: float = 16.0          # mm
    radius: tuple = (1.6, 2.4)    # mm, uniform range
    tilt: float = 0.35            # rad, largest axis tilt from z
    segments: int = 32

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"geometry.family must be one of {FAMILIES}, got {self.family!r}")
        if self.n_base < 1:
            raise ConfigError(f"geometry.n_base must be >= 1, got {self.n_base}")
        if self.k_deform < 1:
            raise ConfigError(f"geometry.k_deform must be >= 1, got {self.k_deform}")
        r = tuple(float(x) for x in self.radius)
        if len(r) != 2 or not 0 < r[0] <= r[1]:
            raise ConfigError(f"geometry.radius must be [lo, hi] with 0 < lo <= hi, got {self.radius}")
        object.__setattr__(self, "radius", r)
        if not self.length > 4 * r[1]:
            raise ConfigError("geometry.length must exceed four times the largest radius")
        if not 0 <= self.tilt < 1.2 or self.segments < 8:
            raise ConfigError("geometry.tilt must lie in [0, 1.2) and segments >= 8")


@dataclass(frozen=True)
class GridConfig:
    spacing: float = 0.5          # mm

    def __post_init__(self):
        if not self.spacing > 0:
            raise ConfigError(f"grid.spacing must be positive, got {self.spacing}")


@dataclass(frozen=True)
class SweepConfig:
    kind: str = "flow_diversity"
    grid: tuple = (1, 2, 4)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"sweep.kind must be one of {KINDS}, got {self.kind!r}")
        if not self.grid:
            raise ConfigError("sweep.grid must not be empty")
        object.__setattr__(self, "grid", tuple(self.grid))


@dataclass
class PipelineConfig:
    seed: int = 0
    root: str | None = None
    preset: str = "desk"
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    fluid: FluidProps = field(default_factory=FluidProps)
    flows: tuple = CANONICAL_FLOWS
    solver: SolverConfig = field(default_factory=SolverConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"preset must be one of {PRESETS}, got {self.preset!r}")
        flows = tuple(sorted(float(f) for f in self.flows))
        if not flows or len(set(flows)) != len(flows):
            raise ConfigError("flows.mdot must be a non-empty list of distinct rates")
        for f in flows:
            FlowCondition(f)
        self.flows = flows

    def resolve_root(self, flag: str | None = None) -> Path:
        for cand in (flag, os.environ.get(ROOT_ENV), self.root):
            if cand:
                return Path(cand)
        raise ConfigError(f"no corpus root: pass --root, set {ROOT_ENV} or put root in the config")

    def section_hash(self, *names: str) -> str:
        """Stable digest of the named sections (used to gate reruns)."""
        doc = {n: _plain(getattr(self, n)) for n in names}
        return hashlib.blake2b(json.dumps(doc, sort_keys=True).encode(), digest_size=8).hexdigest()


def _plain(obj):
    if hasattr(obj, "__dataclass_fields__"):
        return {k: _plain(v) for k, v in asdict(obj).items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


_SECTIONS = {
    "geometry": GeometryConfig, "grid": GridConfig, "fluid": FluidProps, "solver": SolverConfig,
    "model": ModelConfig, "train": TrainConfig, "split": SplitSpec, "sweep": SweepConfig,
}
_TOP = {"seed", "root", "preset", "flows"} | set(_SECTIONS)


def _section(cls, table, name):
    if not isinstance(table, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name for f in fields(cls)}
    extra = set(table) - known
    if extra:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(extra))}")
    try:
        return cls(**table)
    except (TypeError, ValueError, SplitError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc


def preset_defaults(preset: str) -> dict:
    """Section objects fixed by a preset; the config file overrides individual keys."""
    if preset == "paper-faithful":
        return {
            "fluid": FluidProps(1050.0, 0.00345),
            "flows": CANONICAL_FLOWS,
            "solver": SolverConfig.faithful_preset(tol_velocity=1e-9, tol_pressure=1e-5, cfl_limit=1.0),
        }
    if preset == "desk":
        return {}
    raise ConfigError(f"preset must be one of {PRESETS}, got {preset!r}")


def config_from_dict(data: dict, preset: str | None = None, seed: int | None = None) -> PipelineConfig:
    extra = set(data) - _TOP
    if extra:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(extra))}")
    preset = preset or data.get("preset", "desk")
    base = preset_defaults(preset)
    kw = {"preset": preset}
    for name, cls in _SECTIONS.items():
        table = data.get(name, {})
        if name in base:
            table = {**asdict(base[name]), **table}
        kw[name] = _section(cls, table, name)
    flows = data.get("flows", {})
    if not isinstance(flows, dict) or set(flows) - {"mdot"}:
        raise ConfigError("[flows] accepts only the key 'mdot'")
    kw["flows"] = tuple(flows.get("mdot", base.get("flows", CANONICAL_FLOWS)))
    if "root" in data:
        kw["root"] = str(data["root"])
    s = data.get("seed", 0) if seed is None else seed
    if isinstance(s, bool) or not isinstance(s, int) or s < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {s!r}")
    kw["seed"] = s
    cfg = PipelineConfig(**kw)
    if seed is not None:
        # the master seed also drives model init, sampling and splits
        cfg.model = replace(cfg.model, seed=seed)
        cfg.train = replace(cfg.train, seed=seed)
        cfg.split = replace(cfg.split, seed=seed)
    return cfg


def load_pipeline_config(path=None, preset: str | None = None, seed: int | None = None) -> PipelineConfig:
    if path is None:
        return config_from_dict({}, preset, seed)
    try:
        with open(Path(path), "rb") as fh:
            data = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data, preset, seed)
