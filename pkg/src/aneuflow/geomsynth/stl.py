"""STL read/write (ASCII and little-endian binary)."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..atomic import atomic_write
from .mesh import MeshError, TriMesh, face_normals, weld_vertices

_RECORD = np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])


def stl_bytes(mesh: TriMesh, binary: bool = True, name: str = "vessel") -> bytes:
    tri = mesh.triangles()
    nrm = face_normals(mesh)
    if binary:
        # normals from the stored float32 vertices, so a read-back mesh rewrites to the same bytes
        nrm = face_normals(TriMesh(mesh.vertices.astype(np.float32), mesh.faces, mesh.face_tags))
        rec = np.zeros(len(tri), dtype=_RECORD)
        rec["n"] = nrm
        rec["v"] = tri
        # cap tag travels in the attribute word (0 = wall, k+1 = cap k)
        rec["attr"] = np.where(mesh.face_tags >= 0, mesh.face_tags + 1, 0)
        header = f"aneuflow {name}".encode()[:80].ljust(80, b" ")
        return header + struct.pack("<I", len(tri)) + rec.tobytes()
    lines = [f"solid {name}"]
    for n, t in zip(nrm, tri):
        lines.append(f"  facet normal {n[0]:.9e} {n[1]:.9e} {n[2]:.9e}")
        lines.append("    outer loop")
        for p in t:
            lines.append(f"      vertex {p[0]:.9e} {p[1]:.9e} {p[2]:.9e}")
        lines.append("    endloop")
        lines.append("  endfacet")
    lines.append(f"endsolid {name}")
    return ("\n".join(lines) + "\n").encode()


def write_stl(mesh: TriMesh, path, binary: bool = True, name: str = "vessel") -> None:
    atomic_write(path, stl_bytes(mesh, binary, name))


def _is_ascii(data: bytes) -> bool:
    if not data[:5].lower() == b"solid":
        return False
    if len(data) >= 84:
        n = struct.unpack("<I", data[80:84])[0]
        if 84 + 50 * n == len(data):
            return False
    return True


def read_stl(path, weld_tol: float = 1e-5) -> TriMesh:
    return stl_from_bytes(Path(path).read_bytes(), weld_tol)


def stl_from_bytes(data: bytes, weld_tol: float = 1e-5) -> TriMesh:
    """Load an STL file and weld its triangle soup into an indexed mesh.

    Binary files written by :func:`write_stl` carry cap tags in the attribute
    word; ASCII files come back with every face tagged as wall.
    """
    if _is_ascii(data):
        pts = []
        for line in data.decode("ascii", errors="replace").splitlines():
            parts = line.split()
            if parts and parts[0] == "vertex":
                pts.append([float(x) for x in parts[1:4]])
        if len(pts) % 3:
            raise MeshError("ASCII STL vertex count is not a multiple of 3")
        tri = np.asarray(pts, dtype=np.float64).reshape(-1, 3, 3)
        tags = np.full(len(tri), -1, dtype=np.int64)
    else:
        if len(data) < 84:
            raise MeshError("truncated binary STL")
        n = struct.unpack("<I", data[80:84])[0]
        if len(data) < 84 + 50 * n:
            raise MeshError(f"binary STL declares {n} faces but holds {(len(data) - 84) // 50}")
        rec = np.frombuffer(data, dtype=_RECORD, count=n, offset=84)
        tri = rec["v"].astype(np.float64)
        tags = rec["attr"].astype(np.int64) - 1
    verts = tri.reshape(-1, 3)
    faces = np.arange(len(verts)).reshape(-1, 3)
    return weld_vertices(TriMesh(verts, faces, tags), tol=weld_tol)
