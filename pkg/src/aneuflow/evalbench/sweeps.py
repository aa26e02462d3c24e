"""Hyperparameter and data-diversity sweeps over one corpus split."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..atomic import write_if_changed
from ..surrogate import (
    CHANNELS,
    DeepONet,
    ModelConfig,
    TrainConfig,
    build_cases,
    derive_seed,
    fit_normalizer,
    predict,
    save_run,
    train,
)
from .metrics import MetricReport, metric_report
from .splits import Split

KINDS = ("batch_size", "point_density", "flow_diversity", "val_diversity", "scaling")
METRICS_HEADER = ("run", "epoch", "split", "channel", "metric", "value")


class SweepError(ValueError):
    pass


@dataclass(frozen=True)
class RunSpec:
    name: str
    value: float
    seed: int
    train_keys: tuple
    val_keys: tuple
    model: ModelConfig
    train: TrainConfig


def _nested(items, seed, n, what):
    items = sorted(items)
    if n > len(items):
        raise SweepError(f"{what}: grid value {n} exceeds the {len(items)} available")
    perm = np.random.default_rng(seed).permutation(len(items))
    return {items[i] for i in perm[:n]}


def _label(v) -> str:
    return f"{v:g}" if isinstance(v, float) else str(v)


def plan_sweep(kind: str, grid, split: Split, model: ModelConfig, cfg: TrainConfig, master_seed: int) -> list[RunSpec]:
    """One run per grid value.

    Run seeds hash (master seed, kind, value) except for ``val_diversity``,
    whose grid value never touches training, so every run trains identically.
    """
    if kind not in KINDS:
        raise SweepError(f"sweep kind must be one of {KINDS}, got {kind!r}")
    grid = list(grid)
    if not grid:
        raise SweepError("empty sweep grid")
    runs = []
    for v in grid:
        tk, vk, tc = split.train, split.val, cfg
        seed = derive_seed(master_seed, kind, None if kind == "val_diversity" else v)
        if kind == "batch_size":
            tc = replace(cfg, batch_size=int(v))
        elif kind == "point_density":
            tc = replace(cfg, point_density=float(v))
        elif kind == "flow_diversity":
            keep = _nested({f for _, f in split.train}, derive_seed(master_seed, "flows"), int(v), "train flows")
            tk = tuple(k for k in split.train if k[1] in keep)
        elif kind == "val_diversity":
            keep = _nested({f for _, f in split.val}, derive_seed(master_seed, "val-flows"), int(v), "validation flows")
            vk = tuple(k for k in split.val if k[1] in keep)
        else:
            n = int(v)
            if not 1 <= n <= len(split.train):
                raise SweepError(f"scaling: {n} training cases requested, {len(split.train)} available")
            perm = np.random.default_rng(derive_seed(master_seed, "scaling")).permutation(len(split.train))
            tk = tuple(sorted(split.train[i] for i in perm[:n]))
        runs.append(RunSpec(f"{kind}_{_label(v)}", v, seed, tk, vk, replace(model, seed=seed), replace(tc, seed=seed)))
    return runs


def execute_run(run: RunSpec, records, out_dir=None):
    """Train one run; returns ``(history, None)`` or ``(None, error text)``."""
    try:
        norm = fit_normalizer(records, run.train_keys)
        tr = build_cases(records, norm, run.train_keys, run.model.lattice)
        va = build_cases(records, norm, run.val_keys, run.model.lattice)
        res = train(DeepONet(run.model), tr, va, run.train, norm)
        if out_dir is not None:
            save_run(Path(out_dir) / run.name, res.model, run.train, norm, res.history)
        return res.history, None
    except Exception as exc:  # a failed run must not stop the sweep
        return None, f"{type(exc).__name__}: {exc}"


def _execute(args):
    return execute_run(*args)


def metrics_rows(run: str, history) -> list[tuple]:
    out = []
    for e, s, c, l2, mn, loss in history:
        out += [(run, e, s, c, "l2bar", l2), (run, e, s, c, "mnae", mn), (run, e, s, c, "loss", loss)]
    return out


def metrics_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for r, e, s, c, m, v in rows:
        w.writerow([r, e, s, c, m, repr(float(v))])
    return buf.getvalue()


def _final(history, split):
    last = max(r[0] for r in history)
    return {r[2]: (r[3], r[4]) for r in history if r[0] == last and r[1] == split}


def summary_csv(runs: list[RunSpec], results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = [f"{s}_{m}_{c}" for s in ("val", "train") for m in ("mnae", "l2bar") for c in CHANNELS]
    w.writerow(["run", "value", "seed", "n_train", "n_val", "status"] + cols)
    for run, (hist, err) in zip(runs, results):
        row = [run.name, _label(run.value), run.seed, len(run.train_keys), len(run.val_keys), "ok" if err is None else f"failed: {err}"]
        vals = []
        for s in ("val", "train"):
            fin = _final(hist, s) if hist else {}
            for m in (0, 1):
                vals += [repr(float(fin[c][m])) if c in fin else "" for c in CHANNELS]
        w.writerow(row + vals)
    return buf.getvalue()


@dataclass
class SweepResult:
    runs: list[RunSpec]
    histories: list
    errors: list

    @property
    def n_failed(self) -> int:
        return sum(e is not None for e in self.errors)

    def final(self, name: str, split: str = "val") -> dict[str, float]:
        i = [r.name for r in self.runs].index(name)
        if self.histories[i] is None:
            raise SweepError(f"run {name} failed: {self.errors[i]}")
        return {c: v[1] for c, v in _final(self.histories[i], split).items()}


def sweep(kind: str, grid, records, split: Split, model: ModelConfig, cfg: TrainConfig,
          master_seed: int = 0, out_dir=None, jobs: int = 1) -> SweepResult:
    """Train every grid point and write ``metrics.csv`` and ``sweep_summary.csv`` to ``out_dir``."""
    runs = plan_sweep(kind, grid, split, model, cfg, master_seed)
    args = [(r, records, out_dir) for r in runs]
    if jobs > 1 and len(runs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_execute, args))
    else:
        results = [_execute(a) for a in args]
    if out_dir is not None:
        out = Path(out_dir)
        rows = []
        for r, (hist, _) in zip(runs, results):
            if hist is not None:
                rows += metrics_rows(r.name, hist)
        write_if_changed(out / "metrics.csv", metrics_csv(rows).encode())
        write_if_changed(out / "sweep_summary.csv", summary_csv(runs, results).encode())
        plan = {"kind": kind, "grid": [_label(r.value) for r in runs], "master_seed": master_seed,
                "runs": [{"name": r.name, "seed": r.seed, "train": [list(k) for k in r.train_keys],
                          "val": [list(k) for k in r.val_keys]} for r in runs]}
        write_if_changed(out / "sweep.json", (json.dumps(plan, indent=2, sort_keys=True) + "\n").encode())
    return SweepResult(runs, [h for h, _ in results], [e for _, e in results])


def evaluate_predictions(predict_fn, cases, u_shift: float = -0.5) -> MetricReport:
    """Metrics of ``predict_fn(case) -> (N, 4)`` physical predictions against each case's raw targets."""
    if not cases:
        raise SweepError("no cases to evaluate")
    truth = [c.raw_targets for c in cases]
    pred = [np.asarray(predict_fn(c), dtype=np.float64) for c in cases]
    return metric_report(truth, pred, u_shift)


def model_predictor(model: DeepONet, norm):
    return lambda c: norm.inverse(predict(model, c.lattice, c.mdot, c.points.inputs))

