"""Operator-learning surrogates mapping (geometry, flow, point) to (p, u, v, w)."""

from .data import (
    CHANNELS,
    LATTICE,
    MDOT_REF,
    Normalizer,
    QuerySample,
    SamplingError,
    SurrogateCase,
    build_cases,
    derive_seed,
    fit_normalizer,
    geometry_lattice,
    mdot_norm,
    sample_points,
)
from .models import VARIANTS, DeepONet, ModelConfig, PooledEncoder, WinAttnEncoder, WindowBlock, predict, window_partition
from .train import (
    DENSITIES,
    HISTORY_HEADER,
    TrainConfig,
    TrainingError,
    TrainResult,
    evaluate,
    history_csv,
    load_run,
    read_history,
    save_run,
    total_loss,
    train,
)

__all__ = [
    "CHANNELS", "LATTICE", "MDOT_REF", "Normalizer", "QuerySample", "SamplingError", "SurrogateCase",
    "build_cases", "derive_seed", "fit_normalizer", "geometry_lattice", "mdot_norm", "sample_points",
    "VARIANTS", "DeepONet", "ModelConfig", "PooledEncoder", "WinAttnEncoder", "WindowBlock", "predict",
    "window_partition", "DENSITIES", "HISTORY_HEADER", "TrainConfig", "TrainingError", "TrainResult",
    "evaluate", "history_csv", "load_run", "read_history", "save_run", "total_loss", "train",
]
