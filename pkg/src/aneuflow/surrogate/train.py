"""Weighted-SSE training loop with per-epoch metric history."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..atomic import write_if_changed
from ..autodiff import Adam, NonFiniteError, Tensor, backward, finite_checks, load_params, reduce_sum, save_params
from ..evalbench.metrics import MetricDomainError, l2bar_cases, mnae_cases
from .data import CHANNELS, Normalizer, SurrogateCase, derive_seed, sample_points
from .models import DeepONet, ModelConfig

HISTORY_HEADER = ("epoch", "split", "channel", "l2bar", "mnae", "loss")
DENSITIES = (1.0, 5.0, 10.0, 20.0)


class TrainingError(RuntimeError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 16          # cases per optimizer step
    epochs: int = 100
    point_density: float = 10.0   # percent of each case's points used for training
    lambda_p: float = 1e5
    lambda_u: float = 1e3
    lambda_v: float = 1e3
    lambda_w: float = 1e3
    seed: int = 0
    nested_sampling: bool = True
    eval_points: int = 1000       # fixed per-case subset used for the history metrics
    checkpoint_every: int = 0     # epochs; 0 keeps only the final checkpoint

    def __post_init__(self):
        if min(self.lambda_p, self.lambda_u, self.lambda_v, self.lambda_w) <= 0:
            raise ValueError("loss weights must be positive")
        if not 0 < self.point_density <= 100:
            raise ValueError(f"point_density must lie in (0, 100], got {self.point_density}")
        if self.batch_size < 1 or self.epochs < 0 or self.lr < 0 or self.eval_points < 1:
            raise ValueError("batch_size >= 1, epochs >= 0, lr >= 0 and eval_points >= 1 are required")

    @property
    def weights(self) -> np.ndarray:
        return np.array([self.lambda_p, self.lambda_u, self.lambda_v, self.lambda_w])

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def total_loss(predictions, targets, weights) -> Tensor:
    """Sum over cases of the channel-weighted sums of squared errors.

    ``predictions``/``targets`` are one ``(N, 4)`` pair or equal-length lists
    of per-case pairs; since SSE is additive over points both give the same value.
    """
    w = Tensor(np.asarray(weights, dtype=np.float64))
    if isinstance(predictions, (list, tuple)):
        if len(predictions) != len(targets):
            raise ValueError("predictions and targets differ in case count")
        parts = [total_loss(p, t, weights) for p, t in zip(predictions, targets)]
        out = parts[0]
        for p in parts[1:]:
            out = out + p
        return out
    pred = predictions if isinstance(predictions, Tensor) else Tensor(predictions)
    r = pred - Tensor(np.asarray(targets, dtype=np.float64))
    return reduce_sum(reduce_sum(r * r, axis=0) * w)


@dataclass
class TrainResult:
    model: DeepONet
    history: list[tuple]
    checkpoints: list[Path] = field(default_factory=list)

    def final(self, split: str = "val") -> dict[str, dict[str, float]]:
        last = max(r[0] for r in self.history)
        return {r[2]: {"l2bar": r[3], "mnae": r[4], "loss": r[5]} for r in self.history if r[0] == last and r[1] == split}


def history_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_HEADER)
    for e, s, c, l2, mn, loss in rows:
        w.writerow([e, s, c, repr(float(l2)), repr(float(mn)), repr(float(loss))])
    return buf.getvalue()


def read_history(path) -> list[tuple]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        if tuple(next(r)) != HISTORY_HEADER:
            raise ValueError(f"{path}: not a training history")
        return [(int(a), b, c, float(d), float(e), float(f)) for a, b, c, d, e, f in r]


def _safe(fn, t, p) -> float:
    try:
        return float(np.mean(fn(t, p)))
    except MetricDomainError:
        return float("nan")


class _Batch:
    """Immutable stacked view of a group of cases."""

    def __init__(self, cases: list[SurrogateCase], samples):
        self.lattices = np.stack([c.lattice for c in cases])
        self.mdots = np.array([c.mdot for c in cases])
        self.queries = [s.inputs for s in samples]
        self.targets = np.concatenate([s.targets for s in samples])
        self.sizes = [len(s) for s in samples]


def evaluate(model: DeepONet, cases, samples, norm: Normalizer, weights) -> tuple[dict, float]:
    """Per-channel l2bar/mnae in physical units and the weighted loss on normalized targets."""
    if not cases:
        return {}, float("nan")
    b = _Batch(cases, samples)
    pred = model.forward(b.lattices, b.mdots, b.queries).data
    loss = float(total_loss(Tensor(pred), b.targets, weights).data)
    cut = np.cumsum(b.sizes)[:-1]
    pp = np.split(norm.inverse(pred), cut)
    tt = np.split(norm.inverse(b.targets), cut)
    out = {}
    for k, ch in enumerate(CHANNELS):
        t = [a[:, k] for a in tt]
        p = [a[:, k] for a in pp]
        out[ch] = {"l2bar": _safe(l2bar_cases, t, p), "mnae": _safe(mnae_cases, t, p)}
    return out, loss


def _eval_samples(cases, cfg: TrainConfig):
    out = []
    for c in cases:
        n = len(c.points)
        dens = min(100.0, 100.0 * cfg.eval_points / n)
        out.append(sample_points(c.points, dens, derive_seed("eval", c.key), nested=True) if dens < 100 else c.points)
    return out


def train(
    model: DeepONet,
    train_cases: list[SurrogateCase],
    val_cases: list[SurrogateCase],
    cfg: TrainConfig,
    norm: Normalizer,
    out_dir=None,
    log=None,
) -> TrainResult:
    """Adam on the weighted SSE, ``batch_size`` cases per step.

    History rows are ``(epoch, split, channel, l2bar, mnae, loss)``; the train
    loss is the exact sum of the step losses of the epoch. With ``out_dir`` the
    history CSV and parameter checkpoints are written there.
    """
    if not train_cases:
        raise TrainingError("empty training split")
    out_dir = Path(out_dir) if out_dir is not None else None
    w = cfg.weights
    samples = [
        sample_points(c.points, cfg.point_density, derive_seed(cfg.seed, "train", c.key), cfg.nested_sampling)
        for c in train_cases
    ]
    ev_train, ev_val = _eval_samples(train_cases, cfg), _eval_samples(val_cases, cfg)
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.parameters(), lr=cfg.lr)
    history, ckpts = [], []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_cases))
        step_losses = []
        for s in range(0, len(order), cfg.batch_size):
            sel = order[s:s + cfg.batch_size]
            b = _Batch([train_cases[i] for i in sel], [samples[i] for i in sel])
            opt.zero_grad()
            try:
                with finite_checks():
                    loss = total_loss(model.forward(b.lattices, b.mdots, b.queries), b.targets, w)
                    backward(loss)
            except NonFiniteError as exc:
                raise TrainingError(f"non-finite loss at epoch {epoch}: {exc}", epoch) from exc
            lv = float(loss.data)
            opt.step()
            step_losses.append(lv)
        ep_loss = math.fsum(step_losses)   # independent of batch order
        for split, cs, ss, loss_v in (("train", train_cases, ev_train, ep_loss), ("val", val_cases, ev_val, None)):
            if not cs:
                continue
            mets, vl = evaluate(model, cs, ss, norm, w)
            for ch in CHANNELS:
                history.append((epoch, split, ch, mets[ch]["l2bar"], mets[ch]["mnae"], loss_v if loss_v is not None else vl))
        if log is not None:
            log(epoch, ep_loss)
        if out_dir is not None and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            ckpts.append(_checkpoint(model, out_dir / f"epoch_{epoch:05d}.f64"))
    if out_dir is not None:
        ckpts.append(save_run(out_dir, model, cfg, norm, history))
    return TrainResult(model, history, ckpts)


def _checkpoint(model: DeepONet, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    save_params(model.state_dict(), path)
    return path


def save_run(out_dir, model: DeepONet, cfg: TrainConfig, norm: Normalizer, history) -> Path:
    """Write ``history.csv``, ``model.f64`` (+ index) and ``run.json``; unchanged files are left alone."""
    out_dir = Path(out_dir)
    write_if_changed(out_dir / "history.csv", history_csv(history).encode())
    meta = {"model": model.cfg.to_dict(), "train": cfg.to_dict(), "normalizer": norm.to_dict()}
    write_if_changed(out_dir / "run.json", (json.dumps(meta, indent=2, sort_keys=True) + "\n").encode())
    return _checkpoint(model, out_dir / "model.f64")


def load_run(out_dir) -> tuple[DeepONet, TrainConfig, Normalizer]:
    """Model, training config and normalizer saved by :func:`save_run`."""
    out_dir = Path(out_dir)
    meta = json.loads((out_dir / "run.json").read_text())
    model = DeepONet(ModelConfig(**meta["model"]))
    model.load_state_dict(load_params(out_dir / "model.f64"))
    return model, TrainConfig.from_dict(meta["train"]), Normalizer.from_dict(meta["normalizer"])
