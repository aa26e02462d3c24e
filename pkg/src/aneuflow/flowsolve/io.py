"""Residual trace CSV and raw checkpoint dumps."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..atomic import atomic_write
from .operators import MacOperators
from .solver import FlowState, ResidualTrace

TRACE_HEADER = ("step", "r_u", "r_v", "r_w", "r_p", "cfl")


def write_trace(trace: ResidualTrace, path) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for row in trace.rows:
            w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])


def read_trace(path) -> ResidualTrace:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = tuple(next(rd))
        if header != TRACE_HEADER:
            raise ValueError(f"{path}: unexpected trace header {header}")
        tr = ResidualTrace()
        for row in rd:
            tr.rows.append((int(row[0]),) + tuple(float(x) for x in row[1:]))
    return tr


def save_checkpoint(state: FlowState, path) -> None:
    """Faces then pressures as little-endian float64, with a ``.json`` sidecar."""
    path = Path(path)
    payload = np.concatenate([state.q, state.p]).astype("<f8").tobytes()
    atomic_write(path, payload)
    meta = {
        "step": int(state.step),
        "n_q": int(state.ops.n_q),
        "n_fluid": int(state.ops.n_fluid),
        "dims": [int(d) for d in state.ops.dims],
        "h": float(state.ops.h),
    }
    atomic_write(path.with_suffix(".json"), (json.dumps(meta, indent=2, sort_keys=True) + "\n").encode())


def load_checkpoint(path, ops: MacOperators) -> FlowState:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    if meta["n_q"] != ops.n_q or meta["n_fluid"] != ops.n_fluid or tuple(meta["dims"]) != tuple(ops.dims):
        raise ValueError(f"{path}: checkpoint does not match the operator layout")
    data = np.frombuffer(path.read_bytes(), dtype="<f8").astype(np.float64)
    if data.size != ops.n_q + ops.n_fluid:
        raise ValueError(f"{path}: expected {ops.n_q + ops.n_fluid} values, found {data.size}")
    return FlowState(ops, data[: ops.n_q].copy(), data[ops.n_q :].copy(), int(meta["step"]))
