"""Adam and raw parameter checkpoints."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..atomic import write_if_changed
from .tensor import Tensor


@dataclass
class AdamState:
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state: AdamState, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update; returns ``(new_params, new_state)`` without mutating inputs."""
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    m = state.m or [np.zeros_like(p) for p in params]
    v = state.v or [np.zeros_like(p) for p in params]
    t = state.t + 1
    new_p, new_m, new_v = [], [], []
    for p, g, mi, vi in zip(params, grads, m, v):
        if p.shape != g.shape:
            raise ValueError(f"parameter shape {p.shape} does not match gradient shape {g.shape}")
        mi = beta1 * mi + (1 - beta1) * g
        vi = beta2 * vi + (1 - beta2) * g * g
        mhat = mi / (1 - beta1**t)
        vhat = vi / (1 - beta2**t)
        new_p.append(p - lr * mhat / (np.sqrt(vhat) + eps))
        new_m.append(mi)
        new_v.append(vi)
    return new_p, AdamState(t, new_m, new_v)


class Adam:
    """Adam over a list of leaf tensors, reading ``.grad`` (missing grads count as zero)."""

    def __init__(self, params: list[Tensor], lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = (beta1, beta2)
        self.eps = eps
        self.state = AdamState()

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        new, self.state = adam_step([p.data for p in self.params], grads, self.state, self.lr, *self.betas, self.eps)
        for p, d in zip(self.params, new):
            p.data = d


def save_params(named: dict[str, np.ndarray], path) -> None:
    """Concatenated little-endian float64 payload plus ``<stem>.json`` shape index."""
    path = Path(path)
    index, chunks, off = [], [], 0
    for name, arr in named.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        index.append({"name": name, "shape": list(a.shape), "offset": off})
        off += a.size
        chunks.append(a.tobytes())
    write_if_changed(path, b"".join(chunks))
    write_if_changed(path.with_suffix(".json"), (json.dumps({"count": off, "params": index}, indent=2) + "\n").encode())


def load_params(path) -> dict[str, np.ndarray]:
    path = Path(path)
    index = json.loads(path.with_suffix(".json").read_text())
    flat = np.frombuffer(path.read_bytes(), dtype="<f8")
    if flat.size != index["count"]:
        raise ValueError(f"{path}: expected {index['count']} values, found {flat.size}")
    out = {}
    for e in index["params"]:
        n = int(np.prod(e["shape"]))
        out[e["name"]] = flat[e["offset"]:e["offset"] + n].reshape(e["shape"]).astype(np.float64)
    return out
