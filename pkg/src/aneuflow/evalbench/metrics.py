"""Per-case error metrics averaged over cases.

Every function takes ``truth`` and ``pred`` as a sequence of per-case
arrays (or one 2-D array, one row per case). Per-case values are computed
first, then averaged with equal case weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MetricDomainError(ValueError):
    pass


def _cases(truth, pred):
    if isinstance(truth, np.ndarray) and truth.ndim == 1:
        truth, pred = [truth], [pred]
    t = [np.asarray(x, dtype=np.float64).ravel() for x in truth]
    p = [np.asarray(x, dtype=np.float64).ravel() for x in pred]
    if len(t) != len(p) or any(a.shape != b.shape for a, b in zip(t, p)):
        raise ValueError("truth and prediction are not aligned case by case")
    if not t:
        raise ValueError("no cases")
    return t, p


def l2bar_cases(truth, pred) -> np.ndarray:
    t, p = _cases(truth, pred)
    out = np.empty(len(t))
    for i, (a, b) in enumerate(zip(t, p)):
        n = np.linalg.norm(a)
        if n == 0:
            raise MetricDomainError(f"case {i}: |y| = 0, relative L2 undefined (shift the channel first)")
        out[i] = np.linalg.norm(a - b) / n
    return out


def mnae_cases(truth, pred) -> np.ndarray:
    t, p = _cases(truth, pred)
    out = np.empty(len(t))
    for i, (a, b) in enumerate(zip(t, p)):
        rng = a.max() - a.min()
        if not rng > 0:
            raise MetricDomainError(f"case {i}: target range is zero, MNAE undefined")
        out[i] = np.mean(np.abs(a - b)) / rng
    return out


def mse_cases(truth, pred) -> np.ndarray:
    t, p = _cases(truth, pred)
    return np.array([np.mean((a - b) ** 2) for a, b in zip(t, p)])


def mae_cases(truth, pred) -> np.ndarray:
    t, p = _cases(truth, pred)
    return np.array([np.mean(np.abs(a - b)) for a, b in zip(t, p)])


def l2bar(truth, pred) -> float:
    """Mean over cases of |y - y_hat|_2 / |y|_2."""
    return float(np.mean(l2bar_cases(truth, pred)))


def mnae(truth, pred) -> float:
    """Mean over cases of mean|y - y_hat| / (max y - min y)."""
    return float(np.mean(mnae_cases(truth, pred)))


def mse(truth, pred) -> float:
    return float(np.mean(mse_cases(truth, pred)))


def mae(truth, pred) -> float:
    return float(np.mean(mae_cases(truth, pred)))


@dataclass
class ChannelReport:
    l2bar: float
    mnae: float
    mse: float
    mae: float
    per_case: dict = field(default_factory=dict)
    shift: float = 0.0


def channel_report(truth, pred, shift: float = 0.0) -> ChannelReport:
    """All four metrics; ``l2bar`` is evaluated on ``y + shift`` for both truth and prediction."""
    t, p = _cases(truth, pred)
    ts = [a + shift for a in t]
    ps = [b + shift for b in p]
    pc = {
        "l2bar": l2bar_cases(ts, ps),
        "mnae": mnae_cases(t, p),
        "mse": mse_cases(t, p),
        "mae": mae_cases(t, p),
    }
    return ChannelReport(
        l2bar=float(pc["l2bar"].mean()),
        mnae=float(pc["mnae"].mean()),
        mse=float(pc["mse"].mean()),
        mae=float(pc["mae"].mean()),
        per_case={k: v.tolist() for k, v in pc.items()},
        shift=float(shift),
    )


def u_shift_eval(truth_u, pred_u, shift: float = -0.5) -> ChannelReport:
    """Metrics for the u channel with its relative L2 taken on ``u + shift``.

    MNAE, MSE and MAE are shift-invariant and use the raw values.
    """
    return channel_report(truth_u, pred_u, shift=shift)


CHANNELS = ("p", "u", "v", "w")


@dataclass
class MetricReport:
    channels: dict[str, ChannelReport]
    u_shift: float

    def rows(self) -> list[tuple[str, str, float]]:
        out = []
        for c, r in self.channels.items():
            out += [(c, "l2bar", r.l2bar), (c, "mnae", r.mnae), (c, "mse", r.mse), (c, "mae", r.mae)]
        return out


def metric_report(truth: list[np.ndarray], pred: list[np.ndarray], u_shift: float = -0.5) -> MetricReport:
    """Per-channel metrics for lists of ``(N_i, 4)`` arrays with columns p, u, v, w."""
    reps = {}
    for k, c in enumerate(CHANNELS):
        t = [np.asarray(a)[:, k] for a in truth]
        p = [np.asarray(b)[:, k] for b in pred]
        reps[c] = channel_report(t, p, shift=u_shift if c == "u" else 0.0)
    return MetricReport(reps, u_shift)
