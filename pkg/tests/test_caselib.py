import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aneuflow.caselib import (
    CaseExistsError,
    CaseNotFoundError,
    CaseRecord,
    CaselibError,
    CorruptionError,
    MissingFileError,
    build_manifest,
    case_files,
    default_root,
    flow_dirname,
    list_cases,
    read_case,
    read_vtk,
    validate_layout,
    verify_manifest,
    vtk_bytes,
    write_case,
)
from aneuflow.flowsolve import CANONICAL_FLOWS
from aneuflow.geomsynth import build_vessel, straight_centerline
from aneuflow.hemometrics import REGIONS, CaseSummary, RegionFields
from aneuflow.voxdomain import signed_distance, voxelize


@pytest.fixture(scope="module")
def geometry():
    mesh = build_vessel(straight_centerline(6.0, 1.0), 12)
    mask = voxelize(mesh, 0.5)
    sdf = signed_distance(mesh, mask, mask)
    return mesh, mask, sdf


def _fields(rng, n=20):
    return {r: RegionFields(r, rng.random((n + i, 3)), rng.standard_normal((n + i, 3)), rng.standard_normal(n + i)) for i, r in enumerate(REGIONS)}


def make_record(geometry, case_id, flows, seed=0):
    mesh, mask, sdf = geometry
    rng = np.random.default_rng(seed)
    fields = {f: _fields(rng) for f in flows}
    sums = {f: CaseSummary(case_id, f, 0.5 + f, 3.0, 0.1, 100.0 * f / 0.002, True) for f in flows}
    return CaseRecord(case_id, mesh, mask, sdf, fields, sums, {"seed": seed, "config_hash": "abc"})


def test_flow_dirnames():
    assert flow_dirname(0.0015) == "0.0015"
    assert flow_dirname(0.00375) == "0.00375"
    assert flow_dirname(0.001) == "0.001"


def test_layout_two_flows(tmp_path, geometry):
    rec = make_record(geometry, 7, [0.002, 0.001])
    paths = write_case(rec, tmp_path)
    assert len(paths) == 2 + 8 * 2
    assert all(p.is_file() for p in paths)
    rels = sorted(p.relative_to(tmp_path).as_posix() for p in paths)
    assert "Mask/7.nii.gz" in rels and "Stl/7.stl" in rels
    assert "VTK/0.001/7/internal.vtu" in rels and "VTK/0.002/7/wall.vtp" in rels
    assert "NPY/0.002/array_outlet_7.npy" in rels
    assert rec.flows == [0.001, 0.002]
    assert validate_layout(tmp_path) == []


def test_roundtrip(tmp_path, geometry):
    rec = make_record(geometry, 3, [0.001, 0.004], seed=5)
    write_case(rec, tmp_path)
    back = read_case(tmp_path, 3)
    assert back.flows == rec.flows
    for f in rec.flows:
        for r in REGIONS:
            assert back.fields[f][r].as_array().tobytes() == rec.fields[f][r].as_array().tobytes()
    assert back.summaries == rec.summaries
    assert back.provenance == rec.provenance
    assert np.array_equal(back.mask.values, (rec.mask.values != 0).astype(np.uint8))
    assert np.array_equal(back.mask.origin, rec.mask.origin) and back.mask.h == rec.mask.h
    assert back.sdf.values.tobytes() == rec.sdf.values.tobytes()
    tri_in = rec.mesh.triangles().astype(np.float32)
    assert np.array_equal(back.mesh.triangles().astype(np.float32), tri_in)
    assert np.array_equal(back.mesh.face_tags, rec.mesh.face_tags)


def test_npy_container_layout(tmp_path, geometry):
    write_case(make_record(geometry, 1, [0.002]), tmp_path)
    raw = (tmp_path / "NPY/0.002/array_internal_1.npy").read_bytes()
    assert raw[:6] == b"\x93NUMPY" and raw[6:8] == b"\x01\x00"
    hlen = int.from_bytes(raw[8:10], "little")
    assert (10 + hlen) % 64 == 0
    assert b"'descr': '<f8'" in raw[10:10 + hlen] and b"(21, 7)" in raw[10:10 + hlen]


def test_overwrite_rules(tmp_path, geometry):
    rec = make_record(geometry, 2, [0.002])
    write_case(rec, tmp_path)
    m1 = build_manifest(tmp_path)
    with pytest.raises(CaseExistsError):
        write_case(rec, tmp_path)
    write_case(rec, tmp_path, overwrite=True)
    assert build_manifest(tmp_path).cases == m1.cases
    # dropping a flow removes its files
    write_case(make_record(geometry, 2, [0.001]), tmp_path, overwrite=True)
    assert not (tmp_path / "NPY/0.002").exists() or not any((tmp_path / "NPY/0.002").iterdir())
    assert validate_layout(tmp_path) == []


def test_write_to_unwritable_root(tmp_path, geometry):
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory")
    with pytest.raises(OSError) as err:
        write_case(make_record(geometry, 1, [0.002]), blocker / "corpus")
    assert "blocker" in str(err.value)


def test_read_errors(tmp_path, geometry):
    write_case(make_record(geometry, 4, [0.002]), tmp_path)
    with pytest.raises(CaseNotFoundError):
        read_case(tmp_path, 99)
    arr = tmp_path / "NPY/0.002/array_wall_4.npy"
    data = arr.read_bytes()
    arr.write_bytes(data[:-13])
    with pytest.raises(CorruptionError, match="array_wall_4"):
        read_case(tmp_path, 4)
    with pytest.raises(CorruptionError):
        read_case(tmp_path, 4, verify=False)
    arr.unlink()
    with pytest.raises(MissingFileError, match="array_wall_4"):
        read_case(tmp_path, 4)


def test_interrupted_write_is_rejected(tmp_path, geometry):
    write_case(make_record(geometry, 5, [0.002]), tmp_path)
    (tmp_path / "Meta/5.json").unlink()
    with pytest.raises(CaseNotFoundError):
        read_case(tmp_path, 5)
    assert any("no Meta/5.json" in p for p in validate_layout(tmp_path))
    assert list_cases(tmp_path) == []


def test_manifest_counts_and_verify(tmp_path, geometry):
    m = build_manifest(tmp_path)
    assert m.case_count == 0 and m.n_files == 0
    flows = list(CANONICAL_FLOWS)
    for cid in (1, 2, 3):
        write_case(make_record(geometry, cid, flows, seed=cid), tmp_path)
    m = build_manifest(tmp_path)
    assert m.case_count == 3
    assert m.n_files == 3 * (2 + 8 * 8) == 198
    assert m.flows == [flow_dirname(f) for f in flows]
    assert verify_manifest(tmp_path).ok
    target = tmp_path / "NPY/0.0035/array_inlet_2.npy"
    raw = bytearray(target.read_bytes())
    raw[200] ^= 0x01
    target.write_bytes(bytes(raw))
    rep = verify_manifest(tmp_path)
    assert rep.problems() == {"NPY/0.0035/array_inlet_2.npy": "mismatch"}
    (tmp_path / "Stl/9.stl").write_bytes(b"x")
    assert verify_manifest(tmp_path).problems()["Stl/9.stl"] == "extra"


def test_layout_grammar_violations(tmp_path, geometry):
    write_case(make_record(geometry, 1, [0.002]), tmp_path)
    (tmp_path / "NPY/0.002/array_bogus_1.npy").write_bytes(b"")
    probs = validate_layout(tmp_path)
    assert any("outside layout grammar" in p for p in probs)


def test_case_files_arithmetic():
    assert len(case_files(1, CANONICAL_FLOWS)) == 2 + 8 * 8
    assert len(case_files(1, [])) == 2


def test_default_root_env(monkeypatch, tmp_path):
    monkeypatch.setenv("ANEUFLOW_ROOT", str(tmp_path))
    assert default_root() == tmp_path


def test_record_validation(geometry):
    mesh, mask, sdf = geometry
    with pytest.raises(CaselibError):
        CaseRecord(0, mesh, mask)
    with pytest.raises(CaselibError):
        CaseRecord(1, mesh, mask, fields={0.002: {"inlet": None}})


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 30), st.sampled_from(["ascii", "binary"]), st.sampled_from(["polydata", "unstructured"]), st.integers(0, 2**32 - 1))
def test_vtk_roundtrip(n, flavor, kind, seed):
    rng = np.random.default_rng(seed)
    f = RegionFields("wall", rng.standard_normal((n, 3)) * 1e3, rng.standard_normal((n, 3)), rng.standard_normal(n) * 1e-7)
    back = read_vtk(vtk_bytes(f, kind, flavor), "wall")
    assert back.equals(f)
