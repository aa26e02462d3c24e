"""Dataset cases on disk: layout, round-trip I/O and the corpus manifest."""

from .manifest import MANIFEST_NAME, Manifest, VerifyReport, build_manifest, load_manifest, validate_layout, verify_manifest
from .store import (
    ROOT_ENV,
    CaseExistsError,
    CaseNotFoundError,
    CaselibError,
    CaseRecord,
    CorruptionError,
    MissingFileError,
    case_files,
    checksum,
    default_root,
    encode_case,
    flow_dirname,
    flow_key,
    list_cases,
    read_case,
    read_meta,
    write_case,
)
from .vtk import read_vtk, vtk_bytes

__all__ = [
    "MANIFEST_NAME", "Manifest", "VerifyReport", "build_manifest", "load_manifest", "validate_layout",
    "verify_manifest", "ROOT_ENV", "CaseExistsError", "CaseNotFoundError", "CaselibError", "CaseRecord",
    "CorruptionError", "MissingFileError", "case_files", "checksum", "default_root", "encode_case", "flow_dirname",
    "flow_key", "list_cases", "read_case", "read_meta", "write_case", "read_vtk", "vtk_bytes",
]
