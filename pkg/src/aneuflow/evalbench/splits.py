"""Train/validation split protocols over (case_id, flow) keys.

``case_id`` identifies a geometry; a key is one CFD case (geometry, flow).
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass, fields

import numpy as np

MODES = ("per_geometry", "geometry_disjoint", "scaling")


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "per_geometry"
    n_train: int = 6                 # per_geometry: train cases per geometry
    n_val: int = 2                   # per_geometry: validation cases per geometry
    train_geometries: int = 8        # geometry_disjoint: geometries used for training
    val_flows: str = "extremes"      # geometry_disjoint: "extremes" (lowest and highest flow) or "all"
    train_fraction: float = 0.7      # scaling: share of each geometry's cases used for training
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise SplitError(f"split mode must be one of {MODES}, got {self.mode!r}")
        if self.n_train < 1 or self.n_val < 0 or self.train_geometries < 1:
            raise SplitError("n_train >= 1, n_val >= 0 and train_geometries >= 1 are required")
        if self.val_flows not in ("extremes", "all"):
            raise SplitError(f"val_flows must be 'extremes' or 'all', got {self.val_flows!r}")
        if not 0 < self.train_fraction <= 1:
            raise SplitError("train_fraction must lie in (0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise SplitError(f"unknown split keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Split:
    train: tuple
    val: tuple

    def to_dict(self) -> dict:
        return {"train": [list(k) for k in self.train], "val": [list(k) for k in self.val]}


def _by_geometry(keys) -> dict[int, list[float]]:
    out = defaultdict(list)
    for cid, f in keys:
        out[int(cid)].append(float(f))
    return {g: sorted(v) for g, v in sorted(out.items())}


def make_split(keys, spec: SplitSpec) -> Split:
    """Deterministic split of ``(case_id, flow)`` keys; train and val never share a key."""
    keys = sorted({(int(c), float(f)) for c, f in keys})
    if not keys:
        raise SplitError("empty corpus")
    geo = _by_geometry(keys)
    rng = np.random.default_rng(spec.seed)
    train, val = [], []
    if spec.mode == "per_geometry":
        need = spec.n_train + spec.n_val
        for g, flows in geo.items():
            if len(flows) < need:
                raise SplitError(f"geometry {g} has {len(flows)} cases, split needs {need}")
            perm = rng.permutation(len(flows))
            train += [(g, flows[i]) for i in sorted(perm[:spec.n_train])]
            val += [(g, flows[i]) for i in sorted(perm[spec.n_train:need])]
    elif spec.mode == "geometry_disjoint":
        ids = list(geo)
        if len(ids) <= spec.train_geometries:
            raise SplitError(f"{len(ids)} geometries leave none for validation after {spec.train_geometries} for training")
        perm = rng.permutation(len(ids))
        tr = sorted(ids[i] for i in perm[:spec.train_geometries])
        for g in ids:
            flows = geo[g]
            if g in tr:
                train += [(g, f) for f in flows]
            elif spec.val_flows == "extremes":
                val += [(g, f) for f in sorted({flows[0], flows[-1]})]
            else:
                val += [(g, f) for f in flows]
    else:
        for g, flows in geo.items():
            k = int(round(spec.train_fraction * len(flows)))
            if k < 1:
                raise SplitError(f"geometry {g}: train fraction selects no case")
            perm = rng.permutation(len(flows))
            train += [(g, flows[i]) for i in sorted(perm[:k])]
            val += [(g, flows[i]) for i in sorted(perm[k:])]
    return Split(tuple(sorted(train)), tuple(sorted(val)))
