"""DeepONet with a pooled-MLP or shifted-window attention geometry encoder."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..autodiff import (
    MLP,
    Linear,
    Module,
    ShapeError,
    Tensor,
    concat,
    gelu,
    matmul,
    mean,
    reduce_sum,
    reshape,
    scale,
    softmax,
    take,
    transpose,
)
from .data import mdot_norm

VARIANTS = ("deeponet", "deeponet-winattn")


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "deeponet"
    width: int = 128          # trunk hidden width
    depth: int = 4            # trunk hidden layers
    latent: int = 128         # m, shared by branch and trunk
    activation: str = "tanh"
    fusion: str = "sum"       # or "concat"
    lattice: int = 16
    pool: int = 2             # pooled encoder: average-pool factor before the MLP
    encoder_width: int = 128
    encoder_depth: int = 2
    bc_width: int = 32
    bc_depth: int = 2
    patch: int = 4
    window: int = 2
    heads: int = 4
    embed: int = 32
    blocks: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"model variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.fusion not in ("sum", "concat"):
            raise ValueError(f"fusion must be 'sum' or 'concat', got {self.fusion!r}")
        if min(self.width, self.depth, self.latent, self.lattice) < 1:
            raise ValueError("model sizes must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def _check_lattice(x: np.ndarray, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 4:
        x = x[None]
    if x.ndim != 5 or x.shape[1:] != (2, n, n, n):
        raise ShapeError(f"expected lattice batch (B, 2, {n}, {n}, {n}), got {x.shape}")
    return x


class PooledEncoder(Module):
    """Average-pools the (occupancy, sdf) lattice and maps the flattened result to the latent."""

    def __init__(self, cfg: ModelConfig, rng):
        if cfg.lattice % cfg.pool:
            raise ShapeError(f"lattice {cfg.lattice} is not divisible by pool {cfg.pool}")
        self.n, self.pool = cfg.lattice, cfg.pool
        g = cfg.lattice // cfg.pool
        self.mlp = MLP(2 * g**3, cfg.encoder_width, cfg.encoder_depth, cfg.latent, rng, cfg.activation)

    def features(self, lattice) -> np.ndarray:
        x = _check_lattice(lattice, self.n)
        b, g, p = len(x), self.n // self.pool, self.pool
        return x.reshape(b, 2, g, p, g, p, g, p).mean(axis=(3, 5, 7)).reshape(b, -1)

    def __call__(self, lattice) -> Tensor:
        return self.mlp(Tensor(self.features(lattice)))


def window_partition(grid: int, window: int, shift: int = 0) -> np.ndarray:
    """Token ids grouped by window, shape ``(n_windows, window**3)``.

    Tokens sit on a ``grid^3`` lattice in C order. A shift moves the window
    origin by ``shift`` tokens along every axis with cyclic wrap.
    """
    if grid % window:
        raise ShapeError(f"token grid {grid} is not divisible by window {window}")
    c = np.arange(grid)
    i, j, k = np.meshgrid(c, c, c, indexing="ij")
    tok = (i * grid + j) * grid + k
    s = [(a - shift) % grid for a in (i, j, k)]
    nw = grid // window
    wid = ((s[0] // window) * nw + s[1] // window) * nw + s[2] // window
    pos = ((s[0] % window) * window + s[1] % window) * window + s[2] % window
    out = np.empty((nw**3, window**3), dtype=np.int64)
    out[wid.ravel(), pos.ravel()] = tok.ravel()
    return out


class WindowBlock(Module):
    """Multi-head self-attention inside fixed windows, then a token-wise MLP; both residual."""

    def __init__(self, embed: int, heads: int, grid: int, window: int, shift: int, rng):
        if embed % heads:
            raise ShapeError(f"embed {embed} is not divisible by heads {heads}")
        self.heads, self.dh = heads, embed // heads
        self.q = Linear(embed, embed, rng)
        self.k = Linear(embed, embed, rng)
        self.v = Linear(embed, embed, rng)
        self.o = Linear(embed, embed, rng)
        self.fc1 = Linear(embed, 2 * embed, rng)
        self.fc2 = Linear(2 * embed, embed, rng)
        self.shift = shift
        self.part = window_partition(grid, window, shift)
        self.inv = np.argsort(self.part.ravel())

    def __call__(self, x: Tensor) -> Tensor:
        b, t, e = x.shape
        nw, n = self.part.shape
        xw = reshape(take(x, self.part.ravel(), axis=1), (b, nw, n, e))

        def heads(z):
            return transpose(reshape(z, (b, nw, n, self.heads, self.dh)), (0, 1, 3, 2, 4))

        q, k, v = heads(self.q(xw)), heads(self.k(xw)), heads(self.v(xw))
        att = softmax(scale(matmul(q, transpose(k, (0, 1, 2, 4, 3))), 1.0 / np.sqrt(self.dh)), axis=-1)
        y = reshape(transpose(matmul(att, v), (0, 1, 3, 2, 4)), (b, nw * n, e))
        x = x + take(self.o(y), self.inv, axis=1)
        return x + self.fc2(gelu(self.fc1(x)))


class WinAttnEncoder(Module):
    """Patch embedding, windowed attention blocks (odd blocks shifted by half a window), mean-pool."""

    def __init__(self, cfg: ModelConfig, rng):
        if cfg.lattice % cfg.patch:
            raise ShapeError(f"lattice {cfg.lattice} is not divisible by patch {cfg.patch}")
        self.n, self.p = cfg.lattice, cfg.patch
        self.g = cfg.lattice // cfg.patch
        if self.g % cfg.window:
            raise ShapeError(f"token grid {self.g} is not divisible by window {cfg.window}")
        self.embed = Linear(2 * cfg.patch**3, cfg.embed, rng)
        self.pos = Tensor(0.02 * rng.standard_normal((self.g**3, cfg.embed)), requires_grad=True)
        half = cfg.window // 2
        self.blocks = [
            WindowBlock(cfg.embed, cfg.heads, self.g, cfg.window, half if i % 2 else 0, rng)
            for i in range(cfg.blocks)
        ]
        self.head = Linear(cfg.embed, cfg.latent, rng)

    def tokens(self, lattice) -> np.ndarray:
        x = _check_lattice(lattice, self.n)
        b, g, p = len(x), self.g, self.p
        x = x.reshape(b, 2, g, p, g, p, g, p).transpose(0, 2, 4, 6, 1, 3, 5, 7)
        return x.reshape(b, g**3, 2 * p**3)

    def __call__(self, lattice) -> Tensor:
        x = self.embed(Tensor(self.tokens(lattice))) + self.pos
        for blk in self.blocks:
            x = blk(x)
        return self.head(mean(x, axis=1))


class DeepONet(Module):
    """Branch (geometry + flow) and trunk (query point) networks joined per output channel.

    For channel c: y_c = s_c(mdot) * sum_k branch_k * trunk_{k,c} + bias_c with
    the bypass scaler s_c = a_c * mdot / 0.004 + b_c.
    """

    def __init__(self, cfg: ModelConfig | None = None):
        cfg = cfg or ModelConfig()
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        m = cfg.latent
        self.encoder = (PooledEncoder if cfg.variant == "deeponet" else WinAttnEncoder)(cfg, rng)
        self.bc = MLP(1, cfg.bc_width, cfg.bc_depth, m, rng, cfg.activation)
        self.fuse = Linear(2 * m, m, rng) if cfg.fusion == "concat" else None
        self.trunk = MLP(4, cfg.width, cfg.depth, 4 * m, rng, cfg.activation)
        self.bias = Tensor(np.zeros(4), requires_grad=True)
        self.scale_a = Tensor(np.ones(4), requires_grad=True)
        self.scale_b = Tensor(np.zeros(4), requires_grad=True)

    def set_scaler(self, a, b, frozen: bool = False) -> None:
        self.scale_a = Tensor(np.broadcast_to(np.asarray(a, float), 4).copy(), requires_grad=not frozen)
        self.scale_b = Tensor(np.broadcast_to(np.asarray(b, float), 4).copy(), requires_grad=not frozen)

    def bc_branch(self, mdot) -> Tensor:
        return self.bc(Tensor(mdot_norm(np.atleast_1d(mdot)).reshape(-1, 1)))

    def branch(self, lattices, mdots) -> Tensor:
        """Fused branch latent, one row per case."""
        geo, bc = self.encoder(lattices), self.bc_branch(mdots)
        if geo.shape[0] != bc.shape[0]:
            raise ShapeError(f"{geo.shape[0]} geometries but {bc.shape[0]} flow conditions")
        if self.fuse is None:
            return geo + bc
        return self.fuse(concat([geo, bc], axis=1))

    def trunk_features(self, queries) -> Tensor:
        q = np.asarray(queries, dtype=np.float64)
        if q.ndim != 2 or q.shape[1] != 4:
            raise ShapeError(f"queries must have shape (N, 4), got {q.shape}")
        return reshape(self.trunk(Tensor(q)), (len(q), self.cfg.latent, 4))

    def combine(self, branch: Tensor, trunk: Tensor, case_index, mdots, scaler: bool = True) -> Tensor:
        """Per-point outputs ``(N, 4)``; ``case_index`` maps each trunk row to a branch row."""
        if branch.ndim != 2 or trunk.ndim != 3 or branch.shape[1] != trunk.shape[1]:
            raise ShapeError(f"latent widths differ: branch {branch.shape}, trunk {trunk.shape}")
        idx = np.asarray(case_index, dtype=np.int64)
        bp = reshape(take(branch, idx, axis=0), (len(idx), branch.shape[1], 1))
        dot = reduce_sum(bp * trunk, axis=1)
        if scaler:
            mn = Tensor(mdot_norm(np.atleast_1d(mdots))[idx].reshape(-1, 1))
            dot = (self.scale_a * mn + self.scale_b) * dot
        return dot + self.bias

    def forward(self, lattices, mdots, queries: list) -> Tensor:
        """Stacked outputs for a batch of cases; ``queries[i]`` holds the rows of case ``i``."""
        br = self.branch(lattices, mdots)
        idx = np.concatenate([np.full(len(q), i) for i, q in enumerate(queries)])
        tr = self.trunk_features(np.concatenate(queries))
        return self.combine(br, tr, idx, mdots)

    __call__ = forward


def predict(model: DeepONet, lattice, mdot: float, queries) -> np.ndarray:
    """Normalized (p, u, v, w) at ``queries`` rows (x, y, z, sdf) for one geometry and flow."""
    q = np.asarray(queries, dtype=np.float64)
    return model.forward(np.asarray(lattice)[None], [mdot], [q]).data
