import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aneuflow.caselib import CaseRecord
from aneuflow.evalbench import (
    MetricDomainError,
    SplitError,
    SplitSpec,
    SweepError,
    channel_report,
    execute_run,
    l2bar,
    mae,
    make_split,
    metric_report,
    mnae,
    mse,
    plan_sweep,
    sweep,
    u_shift_eval,
)
from aneuflow.geomsynth import build_vessel, straight_centerline
from aneuflow.hemometrics import REGIONS, RegionFields
from aneuflow.surrogate import DeepONet, ModelConfig, TrainConfig, build_cases, fit_normalizer, train
from aneuflow.voxdomain import signed_distance, voxelize

FLOWS = (0.001, 0.002, 0.003, 0.004)


# -- metrics --------------------------------------------------------------------

def test_l2bar_examples():
    y = np.array([3.0, 4.0])
    assert l2bar(y, y) == 0.0
    assert l2bar(y, np.zeros(2)) == 1.0
    # per-case values 0.5 and 1.5
    truth = [np.array([2.0]), np.array([2.0])]
    pred = [np.array([1.0]), np.array([5.0])]
    assert l2bar(truth, pred) == 1.0
    with pytest.raises(MetricDomainError):
        l2bar(np.zeros(3), np.ones(3))


def test_mnae_examples():
    y = np.array([0.0, 1.0, 2.0])
    yh = np.array([0.1, 1.1, 1.9])
    assert mnae(y, y) == 0.0
    assert mnae(y, yh) == pytest.approx(0.05, rel=1e-14)
    assert mnae(2 * y + 7, 2 * yh + 7) == pytest.approx(mnae(y, yh), rel=1e-14)
    with pytest.raises(MetricDomainError):
        mnae(np.ones(4), np.zeros(4))


def test_mse_mae_examples():
    y, yh = np.array([1.0, 2.0]), np.array([2.0, 4.0])
    assert mse(y, yh) == 2.5 and mae(y, yh) == 1.5
    assert mse(y, y) == 0.0 and mae(y, y) == 0.0
    for c in (-3.0, 0.25, 7.0):
        assert mse(y, y + c) == pytest.approx(c * c, rel=1e-14)
        assert mae(y, y + c) == pytest.approx(abs(c), rel=1e-14)


def test_u_shift_examples():
    u, uh = np.array([0.01]), np.array([0.02])
    assert l2bar(u, uh) == pytest.approx(1.0, rel=1e-12)
    # translated u = -0.49, |error| unchanged at 0.01
    shifted = l2bar(u - 0.5, uh - 0.5)
    assert shifted == pytest.approx(0.01 / 0.49, rel=1e-12) and round(shifted, 4) == 0.0204
    v = np.array([0.0, 0.25, 0.125])  # dyadic, so the shift is exact in floating point
    vh = v + np.array([0.015625, -0.03125, 0.046875])
    r = u_shift_eval([v], [vh])
    assert r.shift == -0.5
    assert r.l2bar == l2bar(v - 0.5, vh - 0.5) != channel_report([v], [vh]).l2bar
    same = u_shift_eval([v], [v], shift=-0.5)
    assert (same.l2bar, same.mnae, same.mse, same.mae) == (0.0, 0.0, 0.0, 0.0)
    assert u_shift_eval([v], [vh]).mnae == mnae(v, vh) == mnae(v - 0.5, vh - 0.5)


def test_metric_report_rows():
    rng = np.random.default_rng(0)
    truth = [rng.standard_normal((20, 4)) for _ in range(3)]
    pred = [t + 0.1 for t in truth]
    rep = metric_report(truth, pred)
    rows = rep.rows()
    assert len(rows) == 16 and {r[0] for r in rows} == {"p", "u", "v", "w"}
    for ch in "pvw":
        assert rep.channels[ch].mae == pytest.approx(0.1, rel=1e-12)
    assert rep.channels["u"].shift == -0.5 and rep.channels["p"].shift == 0.0
    assert len(rep.channels["w"].per_case["mnae"]) == 3


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-100, 100), st.floats(0.01, 100), st.integers(1, 4))
def test_metric_invariances(seed, shift, scale, n_cases):
    rng = np.random.default_rng(seed)
    truth = [rng.standard_normal(rng.integers(3, 30)) + 2.0 for _ in range(n_cases)]
    pred = [t + 0.3 * rng.standard_normal(t.shape) for t in truth]
    base = mnae(truth, pred)
    assert mnae([t + shift for t in truth], [p + shift for p in pred]) == pytest.approx(base, rel=1e-9, abs=1e-12)
    assert mnae([t * scale + shift for t in truth], [p * scale + shift for p in pred]) == pytest.approx(base, rel=1e-9, abs=1e-12)
    for f in (mse, mae):
        assert f([t + shift for t in truth], [p + shift for p in pred]) == pytest.approx(f(truth, pred), rel=1e-6, abs=1e-12)
    assert l2bar([t * scale for t in truth], [p * scale for p in pred]) == pytest.approx(l2bar(truth, pred), rel=1e-9)
    # permutations within a case and of case order
    perms = [rng.permutation(t.size) for t in truth]
    order = rng.permutation(n_cases)
    tp = [truth[i][perms[i]] for i in order]
    pp = [pred[i][perms[i]] for i in order]
    for f in (l2bar, mnae, mse, mae):
        assert f(tp, pp) == pytest.approx(f(truth, pred), rel=1e-12)


def test_l2bar_is_not_shift_invariant():
    y = np.array([0.01, 0.02, 0.015])
    yh = y + 0.005
    assert l2bar(y, yh) > 10 * l2bar(y - 0.5, yh - 0.5)


# -- splits ---------------------------------------------------------------------

def _keys(n_geom, n_flows=8):
    flows = [0.001 * (1 + i) for i in range(n_flows)]
    return [(g, f) for g in range(1, n_geom + 1) for f in flows]


def test_geometry_disjoint_counts():
    s = make_split(_keys(10), SplitSpec(mode="geometry_disjoint", train_geometries=8))
    assert len(s.train) == 64 and len(s.val) == 4
    tg, vg = {k[0] for k in s.train}, {k[0] for k in s.val}
    assert len(tg) == 8 and len(vg) == 2 and not tg & vg
    assert {k[1] for k in s.val} == {0.001, 0.008}
    s_all = make_split(_keys(10), SplitSpec(mode="geometry_disjoint", train_geometries=8, val_flows="all"))
    assert len(s_all.val) == 16


def test_per_geometry_partition_and_determinism():
    keys = _keys(5)
    spec = SplitSpec(mode="per_geometry", n_train=6, n_val=2, seed=3)
    s = make_split(keys, spec)
    assert len(s.train) == 30 and len(s.val) == 10
    assert not set(s.train) & set(s.val)
    assert set(s.train) | set(s.val) == set(keys)
    for g in range(1, 6):
        assert sum(k[0] == g for k in s.train) == 6
    assert make_split(list(reversed(keys)), spec) == s
    assert make_split(keys, SplitSpec(mode="per_geometry", seed=4)) != s


def test_scaling_split_fraction():
    s = make_split(_keys(3), SplitSpec(mode="scaling", train_fraction=0.75))
    assert len(s.train) == 18 and len(s.val) == 6


def test_split_errors():
    with pytest.raises(SplitError):
        make_split(_keys(2, 4), SplitSpec(mode="per_geometry", n_train=6, n_val=2))
    with pytest.raises(SplitError):
        make_split([], SplitSpec())
    with pytest.raises(SplitError):
        SplitSpec(mode="kfold")
    with pytest.raises(SplitError):
        SplitSpec.from_dict({"mode": "scaling", "folds": 3})


# -- sweeps ---------------------------------------------------------------------

def _record(cid, radius):
    mesh = build_vessel(straight_centerline(8.0, radius), 16)
    mask = voxelize(mesh, 0.5)
    sdf = signed_distance(mesh, mask, mask)
    idx = np.argwhere((mask.values != 0) & (sdf.values < 0))
    xyz = mask.origin + (idx + 0.5) * mask.h
    fields = {}
    for f in FLOWS:
        s = f / 0.002
        r2 = xyz[:, 0] ** 2 + xyz[:, 1] ** 2
        w = s * (1 - r2 / radius**2)
        uvw = np.column_stack([0.1 * s * xyz[:, 0], -0.05 * s * xyz[:, 1], w])
        p = s * (8.0 - xyz[:, 2])
        region = {r: RegionFields(r, np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0)) for r in REGIONS}
        region["internal"] = RegionFields("internal", xyz, uvw, p)
        fields[f] = region
    return CaseRecord(cid, mesh, mask, sdf, fields, {}, {})


@pytest.fixture(scope="module")
def records():
    return [_record(1, 1.6), _record(2, 2.0), _record(3, 1.8)]


TINY_MODEL = ModelConfig(width=8, depth=2, latent=8, lattice=8, pool=4)
TINY_TRAIN = TrainConfig(lr=1e-3, batch_size=2, epochs=3, point_density=50.0, eval_points=100)


@pytest.fixture(scope="module")
def split(records):
    keys = [(r.case_id, f) for r in records for f in r.flows]
    return make_split(keys, SplitSpec(mode="per_geometry", n_train=3, n_val=1))


def test_single_point_sweep_equals_plain_train(records, split):
    sw = sweep("batch_size", [2], records, split, TINY_MODEL, TINY_TRAIN, master_seed=5)
    run = sw.runs[0]
    assert sw.n_failed == 0
    norm = fit_normalizer(records, run.train_keys)
    tr = build_cases(records, norm, run.train_keys, run.model.lattice)
    va = build_cases(records, norm, run.val_keys, run.model.lattice)
    plain = train(DeepONet(run.model), tr, va, run.train, norm)
    assert plain.history == sw.histories[0]


def test_val_diversity_train_curves_identical(records, split):
    sw = sweep("val_diversity", [1, 2, 3], records, split, TINY_MODEL, TINY_TRAIN)
    assert sw.n_failed == 0
    assert [len({k[1] for k in r.val_keys}) for r in sw.runs] == [1, 2, 3]
    curves = [[row for row in h if row[1] == "train"] for h in sw.histories]
    assert curves[0] == curves[1] == curves[2]
    assert len({r.seed for r in sw.runs}) == 1


def test_flow_diversity_plan_is_nested(records, split):
    runs = plan_sweep("flow_diversity", [1, 2, 4], split, TINY_MODEL, TINY_TRAIN, 0)
    flows = [{k[1] for k in r.train_keys} for r in runs]
    assert [len(f) for f in flows] == [1, 2, 4]
    assert flows[0] <= flows[1] <= flows[2]
    assert len({r.seed for r in runs}) == 3
    with pytest.raises(SweepError):
        plan_sweep("flow_diversity", [9], split, TINY_MODEL, TINY_TRAIN, 0)
    with pytest.raises(SweepError):
        plan_sweep("dropout", [0.1], split, TINY_MODEL, TINY_TRAIN, 0)


def test_failed_run_is_recorded(records, split, tmp_path):
    # 0.001% of a few hundred points rounds to zero samples
    sw = sweep("point_density", [0.001, 50.0], records, split, TINY_MODEL, TINY_TRAIN, out_dir=tmp_path)
    assert sw.n_failed == 1
    assert sw.errors[0].startswith("SamplingError") and sw.errors[1] is None
    summary = (tmp_path / "sweep_summary.csv").read_text().splitlines()
    assert summary[1].split(",")[5].startswith("failed") and ",ok," in summary[2]
    assert (tmp_path / "point_density_50" / "model.f64").is_file()
    assert not (tmp_path / "point_density_0.001").exists()
    with pytest.raises(SweepError):
        sw.final("point_density_0.001")
    assert set(sw.final("point_density_50")) == {"p", "u", "v", "w"}


def test_sweep_outputs_are_byte_stable(records, split, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    sweep("scaling", [4, 8], records, split, TINY_MODEL, TINY_TRAIN, out_dir=a)
    sweep("scaling", [4, 8], records, split, TINY_MODEL, TINY_TRAIN, out_dir=b)
    fa = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    fb = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert fa == fb and len(fa) > 3
    assert all((a / p).read_bytes() == (b / p).read_bytes() for p in fa)
    header = (a / "metrics.csv").read_text().splitlines()[0]
    assert header == "run,epoch,split,channel,metric,value"
    mtimes = {p: (a / p).stat().st_mtime_ns for p in fa}
    sweep("scaling", [4, 8], records, split, TINY_MODEL, TINY_TRAIN, out_dir=a)
    assert {p: (a / p).stat().st_mtime_ns for p in fa} == mtimes


def test_execute_run_reports_errors(records, split):
    run = plan_sweep("batch_size", [2], split, TINY_MODEL, TINY_TRAIN, 0)[0]
    hist, err = execute_run(run, [], None)
    assert hist is None and "ValueError" in err
