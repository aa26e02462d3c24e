"""Batch pipeline: gen, sim, analyze, train, eval, sweep and verify."""

from .config import PRESETS, GeometryConfig, GridConfig, PipelineConfig, SweepConfig, config_from_dict, load_pipeline_config
from .main import build_parser, main, run
from .pipeline import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, EXIT_PARTIAL, StageResult

__all__ = [
    "PRESETS", "GeometryConfig", "GridConfig", "PipelineConfig", "SweepConfig", "config_from_dict", "load_pipeline_config",
    "build_parser", "main", "run", "EXIT_CONFIG", "EXIT_FAILED", "EXIT_OK", "EXIT_PARTIAL", "StageResult",
]
