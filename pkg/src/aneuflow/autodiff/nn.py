"""Parameter containers and dense layers."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, gelu, matmul, relu, tanh

ACTIVATIONS = {"tanh": tanh, "relu": relu, "gelu": gelu}


class Module:
    """Holds named parameters and child modules; ``named_parameters`` walks them in insertion order."""

    def named_parameters(self, prefix: str = ""):
        for name, val in vars(self).items():
            if isinstance(val, Tensor) and val.requires_grad:
                yield prefix + name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(prefix + name + ".")
            elif isinstance(val, (list, tuple)):
                for i, v in enumerate(val):
                    if isinstance(v, Module):
                        yield from v.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(state):
            raise KeyError(f"parameter names differ: {sorted(set(own) ^ set(state))[:5]}")
        for k, p in own.items():
            if p.shape != np.shape(state[k]):
                raise ValueError(f"{k}: shape {p.shape} vs {np.shape(state[k])}")
            p.data = np.array(state[k], dtype=np.float64)

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True):
        # Glorot-uniform weights, zero bias
        lim = np.sqrt(6.0 / (n_in + n_out))
        self.W = Tensor(rng.uniform(-lim, lim, (n_in, n_out)), requires_grad=True)
        self.b = Tensor(np.zeros(n_out), requires_grad=True) if bias else None
        self.n_in, self.n_out = n_in, n_out

    def __call__(self, x: Tensor) -> Tensor:
        y = matmul(x, self.W)
        return y + self.b if self.b is not None else y


class MLP(Module):
    """``depth`` hidden layers of ``width`` units; no activation after the last layer."""

    def __init__(self, n_in: int, width: int, depth: int, n_out: int, rng: np.random.Generator, activation: str = "tanh"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        sizes = [n_in] + [width] * depth + [n_out]
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]
        self.activation = activation

    def __call__(self, x: Tensor) -> Tensor:
        act = ACTIVATIONS[self.activation]
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = act(x)
        return x
