"""Legacy VTK point-cloud files carrying velocity and pressure.

Boundary regions are written as POLYDATA with one vertex cell per point,
the internal region as an UNSTRUCTURED_GRID of VTK_VERTEX cells. Both ASCII
and (big-endian) binary legacy flavours are supported; only files produced
here are guaranteed to read back.
"""

from __future__ import annotations

import numpy as np

from ..hemometrics.regions import RegionFields

VTK_VERTEX = 1


def _block(arr: np.ndarray, flavor: str, dtype: str) -> bytes:
    if flavor == "binary":
        return np.ascontiguousarray(arr, dtype=">" + dtype[1:]).tobytes() + b"\n"
    if len(arr) == 0:
        return b""
    if dtype.endswith("f8"):
        rows = [" ".join(repr(float(x)) for x in r) for r in np.atleast_2d(arr.reshape(len(arr), -1))]
    else:
        rows = [" ".join(str(int(x)) for x in r) for r in np.atleast_2d(arr.reshape(len(arr), -1))]
    return ("\n".join(rows) + "\n").encode() if rows else b""


def vtk_bytes(fields: RegionFields, kind: str = "polydata", flavor: str = "ascii") -> bytes:
    if kind not in ("polydata", "unstructured") or flavor not in ("ascii", "binary"):
        raise ValueError(f"unsupported VTK kind/flavor {kind}/{flavor}")
    n = len(fields)
    out = [b"# vtk DataFile Version 3.0\n", f"aneuflow {fields.region}\n".encode(), flavor.upper().encode() + b"\n"]
    out.append(b"DATASET POLYDATA\n" if kind == "polydata" else b"DATASET UNSTRUCTURED_GRID\n")
    out.append(f"POINTS {n} double\n".encode())
    out.append(_block(fields.xyz, flavor, "<f8"))
    conn = np.column_stack([np.ones(n, np.int64), np.arange(n)])
    if kind == "polydata":
        out.append(f"VERTICES {n} {2 * n}\n".encode())
        out.append(_block(conn, flavor, "<i4"))
    else:
        out.append(f"CELLS {n} {2 * n}\n".encode())
        out.append(_block(conn, flavor, "<i4"))
        out.append(f"CELL_TYPES {n}\n".encode())
        out.append(_block(np.full((n, 1), VTK_VERTEX), flavor, "<i4"))
    out.append(f"POINT_DATA {n}\n".encode())
    out.append(b"VECTORS U double\n")
    out.append(_block(fields.uvw, flavor, "<f8"))
    out.append(b"SCALARS p double 1\nLOOKUP_TABLE default\n")
    out.append(_block(fields.p[:, None], flavor, "<f8"))
    return b"".join(out)


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def line(self) -> str:
        end = self.data.index(b"\n", self.pos)
        s = self.data[self.pos:end].decode("ascii")
        self.pos = end + 1
        return s

    def values(self, count: int, dtype: str, binary: bool) -> np.ndarray:
        if binary:
            size = np.dtype(dtype).itemsize * count
            arr = np.frombuffer(self.data, dtype=">" + dtype[1:], count=count, offset=self.pos)
            self.pos += size + 1
            return arr.astype(dtype[1:])
        vals = []
        while len(vals) < count:
            vals += self.line().split()
        return np.array(vals, dtype=np.float64 if dtype.endswith("f8") else np.int64)


def read_vtk(data: bytes, region: str) -> RegionFields:
    c = _Cursor(data)
    if not c.line().startswith("# vtk DataFile"):
        raise ValueError("not a legacy VTK file")
    c.line()
    binary = c.line().strip() == "BINARY"
    kind = c.line().split()[1]
    xyz = uvw = p = None
    while c.pos < len(data):
        head = c.line().split()
        if not head:
            continue
        key = head[0]
        if key == "POINTS":
            n = int(head[1])
            xyz = c.values(3 * n, "<f8", binary).reshape(n, 3)
        elif key in ("VERTICES", "CELLS"):
            c.values(int(head[2]), "<i4", binary)
        elif key == "CELL_TYPES":
            c.values(int(head[1]), "<i4", binary)
        elif key == "POINT_DATA":
            n = int(head[1])
        elif key == "VECTORS":
            uvw = c.values(3 * n, "<f8", binary).reshape(n, 3)
        elif key == "SCALARS":
            c.line()
            p = c.values(n, "<f8", binary)
        else:
            raise ValueError(f"unexpected VTK section {key!r} in {kind}")
    if xyz is None or uvw is None or p is None:
        raise ValueError("incomplete VTK file")
    return RegionFields(region, xyz, uvw, p)
