"""Case persistence in the published dataset layout.

Per case ``<id>`` under a corpus root::

    Mask/<id>.nii.gz
    Stl/<id>.stl
    VTK/<flow>/<id>/{inlet,outlet,wall}.vtp, internal.vtu
    NPY/<flow>/array_<region>_<id>.npy
    Meta/<id>.json, Meta/<id>.sdf

``Meta/<id>.json`` is written last and lists a checksum for every other file
of the case, so it doubles as the commit marker: a case without it, or whose
files disagree with it, is never accepted by :func:`read_case`.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..atomic import atomic_write
from ..geomsynth import TriMesh, stl_bytes, stl_from_bytes
from ..hemometrics import REGIONS, CaseSummary, RegionFields
from ..voxdomain import VoxelGrid, encode_nifti, nifti_from_bytes
from .vtk import vtk_bytes

ROOT_ENV = "ANEUFLOW_ROOT"
REGION_EXT = {"inlet": "vtp", "internal": "vtu", "outlet": "vtp", "wall": "vtp"}
FORMAT_VERSION = 1


class CaselibError(Exception):
    pass


class CaseExistsError(CaselibError, FileExistsError):
    pass


class CaseNotFoundError(CaselibError, LookupError):
    pass


class CorruptionError(CaselibError):
    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class MissingFileError(CorruptionError, FileNotFoundError):
    pass


def default_root() -> Path:
    return Path(os.environ.get(ROOT_ENV, "aneuflow-corpus"))


def checksum(data: bytes) -> str:
    """64-bit BLAKE2b digest as 16 hex characters."""
    return hashlib.blake2b(data, digest_size=8).hexdigest()


def flow_key(mdot: float) -> float:
    return float(f"{float(mdot):.5g}")


def flow_dirname(mdot: float) -> str:
    """Flow directory name: the rate in kg/s to 5 significant digits."""
    return f"{float(mdot):.5g}"


def case_files(case_id: int, flows) -> list[str]:
    """Relative paths of the dataset files of one case, in canonical order."""
    out = [f"Mask/{case_id}.nii.gz", f"Stl/{case_id}.stl"]
    for f in sorted(flow_key(x) for x in flows):
        fd = flow_dirname(f)
        out += [f"VTK/{fd}/{case_id}/{r}.{REGION_EXT[r]}" for r in REGIONS]
        out += [f"NPY/{fd}/array_{r}_{case_id}.npy" for r in REGIONS]
    return out


def meta_files(case_id: int) -> tuple[str, str]:
    return f"Meta/{case_id}.json", f"Meta/{case_id}.sdf"


@dataclass
class CaseRecord:
    case_id: int
    mesh: TriMesh
    mask: VoxelGrid
    sdf: VoxelGrid | None = None
    fields: dict = field(default_factory=dict)       # flow -> {region: RegionFields}
    summaries: dict = field(default_factory=dict)    # flow -> CaseSummary
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.case_id, bool) or int(self.case_id) != self.case_id or self.case_id < 1:
            raise CaselibError(f"case_id must be a positive integer, got {self.case_id!r}")
        self.case_id = int(self.case_id)
        self.fields = {flow_key(k): self.fields[k] for k in sorted(self.fields, key=float)}
        self.summaries = {flow_key(k): self.summaries[k] for k in sorted(self.summaries, key=float)}
        for f, regions in self.fields.items():
            missing = set(REGIONS) - set(regions)
            if missing:
                raise CaselibError(f"case {self.case_id} flow {f}: missing regions {sorted(missing)}")
        extra = set(self.summaries) - set(self.fields)
        if extra:
            raise CaselibError(f"case {self.case_id}: summaries for flows without fields {sorted(extra)}")

    @property
    def flows(self) -> list[float]:
        return list(self.fields)


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.save(buf, np.ascontiguousarray(arr, dtype="<f8"), allow_pickle=False)
    return buf.getvalue()


def _npy_table(raw: bytes, rel: str) -> np.ndarray:
    try:
        arr = np.load(io.BytesIO(raw), allow_pickle=False)
    except (ValueError, EOFError, OSError) as exc:
        raise CorruptionError(f"{rel}: unreadable array ({exc})", rel) from exc
    if arr.ndim != 2 or arr.shape[1] != 7 or arr.dtype != np.float64:
        raise CorruptionError(f"{rel}: expected float64 (N, 7), got {arr.dtype} {arr.shape}", rel)
    return arr


def encode_case(record: CaseRecord, vtk_flavor: str = "ascii") -> dict[str, bytes]:
    """Every file of a case as ``relative path -> bytes`` (meta JSON excluded)."""
    cid = record.case_id
    out = {
        f"Mask/{cid}.nii.gz": encode_nifti(record.mask.like((record.mask.values != 0).astype(np.uint8)), compress=True),
        f"Stl/{cid}.stl": stl_bytes(record.mesh, binary=True, name=f"case {cid}"),
    }
    for f, regions in record.fields.items():
        fd = flow_dirname(f)
        for r in REGIONS:
            kind = "unstructured" if r == "internal" else "polydata"
            out[f"VTK/{fd}/{cid}/{r}.{REGION_EXT[r]}"] = vtk_bytes(regions[r], kind, vtk_flavor)
            out[f"NPY/{fd}/array_{r}_{cid}.npy"] = _npy_bytes(regions[r].as_array())
    if record.sdf is not None:
        out[meta_files(cid)[1]] = np.ascontiguousarray(record.sdf.values, dtype="<f8").tobytes()
    return out


def _meta_doc(record: CaseRecord, sums: dict[str, str]) -> bytes:
    doc = {
        "format": FORMAT_VERSION,
        "case_id": record.case_id,
        "mask_grid": record.mask.sidecar(),
        "sdf_grid": record.sdf.sidecar() if record.sdf is not None else None,
        "flows": [flow_dirname(f) for f in record.flows],
        "summaries": {flow_dirname(f): s.to_dict() for f, s in record.summaries.items()},
        "provenance": record.provenance,
        "files": dict(sorted(sums.items())),
    }
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()


def read_meta(root, case_id: int) -> dict:
    p = Path(root) / meta_files(case_id)[0]
    if not p.is_file():
        raise CaseNotFoundError(f"case {case_id} not found under {root}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise CorruptionError(f"{p}: {exc}", str(p)) from exc


def write_case(record: CaseRecord, root=None, overwrite: bool = False, vtk_flavor: str = "ascii") -> list[Path]:
    """Persist a case; returns the dataset file paths (the Meta files are written as well).

    Files are written one by one through temp-and-rename; the meta JSON is
    removed first and rewritten last, so an interrupted write leaves a case
    that :func:`read_case` rejects.
    """
    root = Path(root) if root is not None else default_root()
    meta_json = root / meta_files(record.case_id)[0]
    old_files = []
    if meta_json.exists():
        if not overwrite:
            raise CaseExistsError(f"case {record.case_id} already exists under {root}")
        old_files = list(read_meta(root, record.case_id).get("files", {}))
        meta_json.unlink()
    blobs = encode_case(record, vtk_flavor)
    sums = {}
    for rel, data in blobs.items():
        p = root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        atomic_write(p, data)
        sums[rel] = checksum(data)
    for rel in old_files:
        if rel not in blobs:
            (root / rel).unlink(missing_ok=True)
    meta_json.parent.mkdir(parents=True, exist_ok=True)
    atomic_write(meta_json, _meta_doc(record, sums))
    return [root / rel for rel in case_files(record.case_id, record.flows)]


def _load(root: Path, rel: str, expect: str, verify: bool) -> bytes:
    p = root / rel
    if not p.is_file():
        raise MissingFileError(f"missing case file {rel}", rel)
    data = p.read_bytes()
    if verify and checksum(data) != expect:
        raise CorruptionError(f"checksum mismatch in {rel}", rel)
    return data


def read_case(root, case_id: int, verify: bool = True) -> CaseRecord:
    root = Path(root) if root is not None else default_root()
    meta = read_meta(root, case_id)
    files = meta["files"]
    expected = set(case_files(case_id, [float(f) for f in meta["flows"]]))
    absent = sorted(expected - set(files))
    if absent:
        raise MissingFileError(f"case {case_id}: meta does not list {absent[0]}", absent[0])
    blobs = {rel: _load(root, rel, files[rel], verify) for rel in sorted(files)}
    try:
        mask = nifti_from_bytes(blobs[f"Mask/{case_id}.nii.gz"], meta["mask_grid"])
    except (ValueError, OSError, EOFError) as exc:
        raise CorruptionError(f"Mask/{case_id}.nii.gz: {exc}", f"Mask/{case_id}.nii.gz") from exc
    mesh = stl_from_bytes(blobs[f"Stl/{case_id}.stl"])
    sdf = None
    if meta.get("sdf_grid") is not None:
        g = meta["sdf_grid"]
        rel = meta_files(case_id)[1]
        dims = tuple(int(d) for d in g["dims"])
        raw = blobs.get(rel)
        if raw is None or len(raw) != 8 * int(np.prod(dims)):
            raise CorruptionError(f"{rel}: size does not match grid", rel)
        sdf = VoxelGrid(np.asarray(g["origin"]), float(g["spacing"]), dims, np.frombuffer(raw, "<f8").reshape(dims).copy())
    fields = {}
    for fd in meta["flows"]:
        fields[float(fd)] = {
            r: RegionFields.from_array(r, _npy_table(blobs[f"NPY/{fd}/array_{r}_{case_id}.npy"], f"NPY/{fd}/array_{r}_{case_id}.npy"))
            for r in REGIONS
        }
    summaries = {float(fd): CaseSummary(**s) for fd, s in meta.get("summaries", {}).items()}
    return CaseRecord(case_id, mesh, mask, sdf, fields, summaries, meta.get("provenance", {}))


def list_cases(root) -> list[int]:
    d = Path(root) / "Meta"
    if not d.is_dir():
        return []
    return sorted(int(p.stem) for p in d.glob("*.json") if p.stem.isdigit())
