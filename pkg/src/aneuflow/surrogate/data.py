"""Training samples: normalized query points, geometry lattices and target scaling."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from ..voxdomain import VoxelGrid

MDOT_REF = 0.004        # kg/s; flow inputs are divided by this
CHANNELS = ("p", "u", "v", "w")
LATTICE = 16


class SamplingError(ValueError):
    pass


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary printable parts."""
    h = hashlib.blake2b("|".join(repr(p) for p in parts).encode(), digest_size=8).digest()
    return int.from_bytes(h, "little") >> 1


def mdot_norm(mdot) -> np.ndarray:
    return np.asarray(mdot, dtype=np.float64) / MDOT_REF


@dataclass(frozen=True)
class QuerySample:
    """Query points of one case: coords in [-1, 1]^3, normalized sdf and (p, u, v, w) targets."""

    coords: np.ndarray
    sdf: np.ndarray
    targets: np.ndarray
    index: np.ndarray | None = None     # positions in the canonical point order

    def __post_init__(self):
        n = len(self.coords)
        if self.coords.shape != (n, 3) or self.sdf.shape != (n,) or self.targets.shape != (n, 4):
            raise ValueError(f"inconsistent sample shapes {self.coords.shape} {self.sdf.shape} {self.targets.shape}")
        if not np.all(np.isfinite(self.targets)):
            raise ValueError("targets must be finite")
        if np.any(self.sdf > 1e-12):
            raise ValueError("interior query points must have sdf <= 0")
        if self.index is None:
            object.__setattr__(self, "index", np.arange(n))

    def __len__(self):
        return len(self.coords)

    @property
    def inputs(self) -> np.ndarray:
        """Trunk input rows (x, y, z, sdf)."""
        return np.column_stack([self.coords, self.sdf])

    def subset(self, idx: np.ndarray) -> "QuerySample":
        return QuerySample(self.coords[idx], self.sdf[idx], self.targets[idx], self.index[idx])


def sample_points(sample: QuerySample, density: float, seed: int, nested: bool = False) -> QuerySample:
    """Uniform subset of ``density`` percent of the points, without replacement.

    Returned points keep canonical order. With ``nested`` every density draws
    a prefix of one seed-wide permutation, so smaller samples are subsets of
    larger ones.
    """
    if not 0 < density <= 100:
        raise SamplingError(f"density must lie in (0, 100], got {density}")
    n = len(sample)
    if density == 100:
        return sample.subset(np.arange(n))
    k = int(round(n * density / 100.0))
    if k < 1:
        raise SamplingError(f"density {density}% of {n} points selects no point")
    if nested:
        pick = np.random.default_rng(seed).permutation(n)[:k]
    else:
        pick = np.random.default_rng([seed, int(round(density * 1e6))]).choice(n, k, replace=False)
    return sample.subset(np.sort(pick))


@dataclass
class Normalizer:
    """Corpus-wide affine maps: isotropic coordinate box, sdf scale and per-channel z-scores."""

    center: np.ndarray
    half: float
    sdf_scale: float
    mean: np.ndarray
    std: np.ndarray

    def coords(self, xyz_mm: np.ndarray) -> np.ndarray:
        return (np.asarray(xyz_mm, dtype=np.float64) - self.center) / self.half

    def sdf(self, d_mm: np.ndarray) -> np.ndarray:
        return np.asarray(d_mm, dtype=np.float64) / self.sdf_scale

    def targets(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.mean) / self.std

    def inverse(self, yn: np.ndarray) -> np.ndarray:
        return np.asarray(yn, dtype=np.float64) * self.std + self.mean

    def lattice_points(self, n: int = LATTICE) -> np.ndarray:
        """Physical centres of an ``n^3`` lattice spanning the normalized cube."""
        t = (np.arange(n) + 0.5) / n * 2 - 1
        g = np.stack(np.meshgrid(t, t, t, indexing="ij"), axis=-1)
        return self.center + self.half * g

    def to_dict(self) -> dict:
        return {
            "center": self.center.tolist(), "half": self.half, "sdf_scale": self.sdf_scale,
            "mean": self.mean.tolist(), "std": self.std.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.asarray(d["center"], float), float(d["half"]), float(d["sdf_scale"]),
                   np.asarray(d["mean"], float), np.asarray(d["std"], float))


def _grid_sample(grid: VoxelGrid, pts: np.ndarray, cval: float) -> np.ndarray:
    idx = (pts.reshape(-1, 3) - grid.origin) / grid.h - 0.5
    out = map_coordinates(np.asarray(grid.values, dtype=np.float64), idx.T, order=1, mode="constant", cval=cval)
    return out.reshape(pts.shape[:-1])


def geometry_lattice(mask: VoxelGrid, sdf: VoxelGrid, norm: Normalizer, n: int = LATTICE) -> np.ndarray:
    """(occupancy, sdf) channels trilinearly resampled onto the ``n^3`` lattice, shape ``(2, n, n, n)``.

    The sdf channel is normalized and clipped to [-1, 1]; outside the source
    grids occupancy is 0 and sdf is 1.
    """
    pts = norm.lattice_points(n)
    occ = _grid_sample(mask.like((mask.values != 0).astype(np.float64)), pts, 0.0)
    d = np.clip(norm.sdf(_grid_sample(sdf, pts, norm.sdf_scale)), -1.0, 1.0)
    return np.stack([occ, d]).astype(np.float64)


def _internal(record, flow):
    return record.fields[flow]["internal"]


def _point_sdf(record, xyz: np.ndarray) -> np.ndarray:
    return np.minimum(_grid_sample(record.sdf, xyz, 0.0), 0.0)


def fit_normalizer(records, train_keys=None) -> Normalizer:
    """Box and sdf scale from every case; target statistics from ``train_keys`` only."""
    keys = train_keys if train_keys is not None else [(r.case_id, f) for r in records for f in r.flows]
    keys = set(keys)
    lo, hi, smax, ys = np.full(3, np.inf), np.full(3, -np.inf), 0.0, []
    for r in records:
        for f in r.flows:
            rf = _internal(r, f)
            if len(rf) == 0:
                continue
            lo, hi = np.minimum(lo, rf.xyz.min(0)), np.maximum(hi, rf.xyz.max(0))
            if (r.case_id, f) in keys:
                ys.append(np.column_stack([rf.p, rf.uvw]))
        if r.sdf is None:
            raise ValueError(f"case {r.case_id} has no sdf grid")
        inside = r.sdf.values[r.sdf.values < 0]
        if inside.size:
            smax = max(smax, float(-inside.min()))
    if not ys:
        raise ValueError("no training points to fit target statistics")
    y = np.concatenate(ys)
    std = y.std(axis=0)
    std[std == 0] = 1.0
    center = 0.5 * (lo + hi)
    half = 0.5 * float(np.max(hi - lo)) * 1.05
    return Normalizer(center, half, smax if smax > 0 else 1.0, y.mean(axis=0), std)


@dataclass
class SurrogateCase:
    """One (geometry, flow) pair ready for training."""

    case_id: int
    mdot: float
    lattice: np.ndarray
    points: QuerySample     # targets normalized
    raw_targets: np.ndarray

    @property
    def key(self) -> tuple[int, float]:
        return (self.case_id, self.mdot)


def build_cases(records, norm: Normalizer, keys=None, lattice: int = LATTICE) -> list[SurrogateCase]:
    """Surrogate cases for every (case_id, flow) in ``records`` (or only ``keys``), in key order."""
    want = set(keys) if keys is not None else None
    out = []
    for r in sorted(records, key=lambda r: r.case_id):
        lat = geometry_lattice(r.mask, r.sdf, norm, lattice)
        for f in r.flows:
            if want is not None and (r.case_id, f) not in want:
                continue
            rf = _internal(r, f)
            raw = np.column_stack([rf.p, rf.uvw])
            q = QuerySample(norm.coords(rf.xyz), norm.sdf(_point_sdf(r, rf.xyz)), norm.targets(raw))
            out.append(SurrogateCase(r.case_id, float(f), lat, q, raw))
    return out
