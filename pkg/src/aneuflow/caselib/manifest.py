"""Corpus manifest, checksum verification and layout validation."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .. import __version__
from ..atomic import write_if_changed
from .store import case_files, checksum, list_cases, meta_files, read_meta

MANIFEST_NAME = "manifest.json"
DATA_DIRS = ("Mask", "Stl", "VTK", "NPY", "Meta")

_FLOW = r"\d+(?:\.\d+)?(?:e-?\d+)?"
_GRAMMAR = [
    re.compile(r"Mask/(?P<id>\d+)\.nii\.gz"),
    re.compile(r"Stl/(?P<id>\d+)\.stl"),
    re.compile(rf"VTK/{_FLOW}/(?P<id>\d+)/(?:inlet|outlet|wall)\.vtp"),
    re.compile(rf"VTK/{_FLOW}/(?P<id>\d+)/internal\.vtu"),
    re.compile(rf"NPY/{_FLOW}/array_(?:inlet|internal|outlet|wall)_(?P<id>\d+)\.npy"),
    re.compile(r"Meta/(?P<id>\d+)\.(?:json|sdf)"),
]


@dataclass
class Manifest:
    tool_version: str
    flows: list[str]
    cases: dict[int, dict[str, str]]              # dataset files per case
    meta: dict[int, dict[str, str]] = field(default_factory=dict)
    root: str = "."

    @property
    def case_count(self) -> int:
        return len(self.cases)

    @property
    def n_files(self) -> int:
        return sum(len(v) for v in self.cases.values())

    def all_files(self) -> dict[str, str]:
        out = {}
        for group in (self.cases, self.meta):
            for files in group.values():
                out.update(files)
        return out

    def to_json(self) -> str:
        doc = {
            "root": self.root,
            "tool_version": self.tool_version,
            "case_count": self.case_count,
            "file_count": self.n_files,
            "flows": self.flows,
            "cases": {str(k): v for k, v in sorted(self.cases.items())},
            "meta": {str(k): v for k, v in sorted(self.meta.items())},
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Manifest":
        doc = json.loads(text)
        return cls(
            tool_version=doc["tool_version"],
            flows=list(doc["flows"]),
            cases={int(k): dict(v) for k, v in doc["cases"].items()},
            meta={int(k): dict(v) for k, v in doc.get("meta", {}).items()},
            root=doc.get("root", "."),
        )


@dataclass
class VerifyReport:
    status: dict[str, str]   # relative path -> ok | mismatch | missing | extra

    @property
    def ok(self) -> bool:
        return all(v == "ok" for v in self.status.values())

    def problems(self) -> dict[str, str]:
        return {k: v for k, v in self.status.items() if v != "ok"}


def _file_sum(root: Path, rel: str) -> str | None:
    p = root / rel
    return checksum(p.read_bytes()) if p.is_file() else None


def build_manifest(root, write: bool = True) -> Manifest:
    """Scan every committed case and checksum its files as they are on disk."""
    root = Path(root)
    cases, metas, flows = {}, {}, set()
    for cid in list_cases(root):
        meta = read_meta(root, cid)
        flows.update(meta["flows"])
        cases[cid] = {}
        for rel in case_files(cid, [float(f) for f in meta["flows"]]):
            s = _file_sum(root, rel)
            cases[cid][rel] = s if s is not None else "missing"
        metas[cid] = {}
        for rel in meta_files(cid):
            s = _file_sum(root, rel)
            if s is not None:
                metas[cid][rel] = s
    m = Manifest(__version__, sorted(flows, key=float), cases, metas)
    if write:
        root.mkdir(parents=True, exist_ok=True)
        write_if_changed(root / MANIFEST_NAME, m.to_json().encode())
    return m


def load_manifest(root) -> Manifest:
    return Manifest.from_json((Path(root) / MANIFEST_NAME).read_text())


def _scan(root: Path) -> list[str]:
    out = []
    for d in DATA_DIRS:
        base = root / d
        if base.is_dir():
            out += [p.relative_to(root).as_posix() for p in base.rglob("*") if p.is_file()]
    return sorted(out)


def verify_manifest(root, manifest: Manifest | None = None) -> VerifyReport:
    """Per-file status against the stored manifest; files on disk it does not know are ``extra``."""
    root = Path(root)
    manifest = manifest if manifest is not None else load_manifest(root)
    expected = manifest.all_files()
    status = {}
    for rel, s in sorted(expected.items()):
        got = _file_sum(root, rel)
        status[rel] = "missing" if got is None else ("ok" if got == s else "mismatch")
    for rel in _scan(root):
        if rel not in expected and not rel.startswith(".") and "/." not in rel:
            status[rel] = "extra"
    return VerifyReport(status)


def validate_layout(root) -> list[str]:
    """Problems with the tree: paths outside the grammar and incomplete cases."""
    root = Path(root)
    problems = []
    seen = {}
    for rel in _scan(root):
        name = rel.rsplit("/", 1)[-1]
        if name.startswith("."):
            problems.append(f"stray temporary file {rel}")
            continue
        m = next((g.fullmatch(rel) for g in _GRAMMAR if g.fullmatch(rel)), None)
        if m is None:
            problems.append(f"path outside layout grammar: {rel}")
            continue
        seen.setdefault(int(m.group("id")), set()).add(rel)
    committed = set(list_cases(root))
    for cid, rels in sorted(seen.items()):
        if cid not in committed:
            problems.append(f"case {cid} has files but no Meta/{cid}.json")
            continue
        meta = read_meta(root, cid)
        need = set(case_files(cid, [float(f) for f in meta["flows"]]))
        for rel in sorted(need - rels):
            problems.append(f"case {cid} is missing {rel}")
        for rel in sorted(rels - need - set(meta_files(cid))):
            problems.append(f"case {cid} has unlisted file {rel}")
    for cid in sorted(committed - set(seen)):
        problems.append(f"case {cid} has meta but no files")
    return problems
