"""Error metrics, split protocols and hyperparameter sweeps."""

from .metrics import (
    CHANNELS,
    ChannelReport,
    MetricDomainError,
    MetricReport,
    channel_report,
    l2bar,
    mae,
    metric_report,
    mnae,
    mse,
    u_shift_eval,
)
from .splits import MODES, Split, SplitError, SplitSpec, make_split

# the sweep module trains surrogates, and surrogate training imports the
# metrics above; load it on first use to keep the import graph acyclic
_SWEEP = ("KINDS", "METRICS_HEADER", "RunSpec", "SweepError", "SweepResult", "evaluate_predictions",
          "execute_run", "metrics_csv", "metrics_rows", "model_predictor", "plan_sweep", "summary_csv", "sweep")


def __getattr__(name):
    if name in _SWEEP:
        from . import sweeps as _mod
        return getattr(_mod, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


__all__ = [
    "CHANNELS", "ChannelReport", "MetricDomainError", "MetricReport", "channel_report", "l2bar", "mae",
    "metric_report", "mnae", "mse", "u_shift_eval", "MODES", "Split", "SplitError", "SplitSpec", "make_split",
    *_SWEEP,
]
