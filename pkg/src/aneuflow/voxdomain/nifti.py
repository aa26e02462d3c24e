"""Minimal NIfTI-1 single-file I/O and raw SDF dumps with JSON sidecars."""

from __future__ import annotations

import gzip
import json
import struct
from pathlib import Path

import numpy as np

from ..atomic import atomic_write
from .grid import VoxelGrid

_DTYPES = {2: np.uint8, 4: np.int16, 8: np.int32, 16: np.float32, 64: np.float64}
_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


_atomic_write = atomic_write


def nifti_bytes(grid: VoxelGrid, dtype=np.uint8) -> bytes:
    """Uncompressed NIfTI-1 image (348-byte header + 4 pad bytes + payload)."""
    data = np.asarray(grid.values, dtype=dtype)
    code = _CODES[data.dtype]
    nx, ny, nz = grid.dims
    hdr = bytearray(348)
    struct.pack_into("<i", hdr, 0, 348)
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<hh", hdr, 70, code, data.dtype.itemsize * 8)
    # pixdim: qfac then spacing (mm)
    struct.pack_into("<8f", hdr, 76, 1.0, grid.h, grid.h, grid.h, 0, 0, 0, 0)
    struct.pack_into("<f", hdr, 108, 352.0)
    struct.pack_into("<f", hdr, 112, 1.0)  # scl_slope
    hdr[123] = 2  # xyzt_units: mm
    struct.pack_into("<hh", hdr, 252, 0, 1)  # qform_code, sform_code
    # affine maps voxel index to cell-centre position
    off = grid.origin + 0.5 * grid.h
    struct.pack_into("<4f", hdr, 280, grid.h, 0, 0, off[0])
    struct.pack_into("<4f", hdr, 296, 0, grid.h, 0, off[1])
    struct.pack_into("<4f", hdr, 312, 0, 0, grid.h, off[2])
    hdr[344:348] = b"n+1\x00"
    return bytes(hdr) + b"\x00" * 4 + data.tobytes(order="F")


def encode_nifti(grid: VoxelGrid, dtype=np.uint8, compress: bool = False) -> bytes:
    raw = nifti_bytes(grid, dtype)
    # mtime=0 keeps the gzip stream byte-stable across runs
    return gzip.compress(raw, compresslevel=6, mtime=0) if compress else raw


def write_nifti(grid: VoxelGrid, path, dtype=np.uint8, sidecar: bool = True) -> None:
    path = Path(path)
    _atomic_write(path, encode_nifti(grid, dtype, compress=path.name.endswith(".gz")))
    if sidecar:
        _atomic_write(_sidecar_path(path), (json.dumps(grid.sidecar(), indent=2, sort_keys=True) + "\n").encode())


def _sidecar_path(path: Path) -> Path:
    name = path.name
    for ext in (".nii.gz", ".nii", ".sdf"):
        if name.endswith(ext):
            return path.with_name(name[: -len(ext)] + ".json")
    return path.with_name(name + ".json")


def read_nifti(path) -> VoxelGrid:
    path = Path(path)
    side = _sidecar_path(path)
    meta = json.loads(side.read_text()) if side.exists() else None
    try:
        return nifti_from_bytes(path.read_bytes(), meta)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc


def nifti_from_bytes(raw: bytes, meta: dict | None = None) -> VoxelGrid:
    """Decode a (possibly gzipped) NIfTI-1 image; ``meta`` overrides the header geometry."""
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    if struct.unpack_from("<i", raw, 0)[0] != 348 or raw[344:347] != b"n+1":
        raise ValueError("not a little-endian single-file NIfTI-1 image")
    dim = struct.unpack_from("<8h", raw, 40)
    code = struct.unpack_from("<h", raw, 70)[0]
    h = struct.unpack_from("<f", raw, 80)[0]
    vox = int(struct.unpack_from("<f", raw, 108)[0])
    dims = tuple(int(d) for d in dim[1:4])
    dt = np.dtype(_DTYPES[code]).newbyteorder("<")
    n = int(np.prod(dims))
    data = np.frombuffer(raw, dtype=dt, count=n, offset=vox).reshape(dims, order="F")
    if meta is not None:
        origin = np.asarray(meta["origin"], dtype=np.float64)
        h = float(meta["spacing"])
    else:
        srow = np.array([struct.unpack_from("<f", raw, 280 + 16 * r + 12)[0] for r in range(3)])
        origin = srow - 0.5 * h
    return VoxelGrid(origin, h, dims, np.array(data))


def write_sdf(grid: VoxelGrid, path, sidecar: bool = True) -> None:
    path = Path(path)
    _atomic_write(path, np.ascontiguousarray(grid.values, dtype="<f8").tobytes(order="C"))
    if sidecar:
        _atomic_write(_sidecar_path(path), (json.dumps(grid.sidecar(), indent=2, sort_keys=True) + "\n").encode())


def read_sdf(path, meta: dict | None = None) -> VoxelGrid:
    path = Path(path)
    if meta is None:
        meta = json.loads(_sidecar_path(path).read_text())
    dims = tuple(int(d) for d in meta["dims"])
    vals = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(dims).astype(np.float64)
    return VoxelGrid(np.asarray(meta["origin"], dtype=np.float64), float(meta["spacing"]), dims, vals)
