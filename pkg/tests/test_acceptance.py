"""Acceptance criteria, one test each; the terminal summary prints a PASS/FAIL line per criterion."""

import csv
import json
import math
import time

import numpy as np
import pytest

from aneuflow.autodiff import grad_check
from aneuflow.caselib import CaseRecord, build_manifest, read_case, validate_layout, verify_manifest, write_case
from aneuflow.cli import EXIT_OK, run
from aneuflow.evalbench import channel_report, l2bar, mae, mnae, mse, u_shift_eval
from aneuflow.flowsolve import (
    CANONICAL_FLOWS,
    FlowCondition,
    FlowSolver,
    FluidProps,
    SolverConfig,
    hagen_poiseuille,
    pressure_drop,
    sample_velocity,
)
from aneuflow.geomsynth import build_vessel, straight_centerline, volume_change_rate
from aneuflow.hemometrics import REGIONS, CaseSummary, RegionFields, max_velocity, normalized_dp, normalized_pressure
from aneuflow.surrogate import DeepONet, ModelConfig, TrainConfig, total_loss
from aneuflow.voxdomain import build_domain, signed_distance

from test_autodiff import OPS, _away_from_zero, _w
from test_surrogate import TINY, _case, _slots

R, L, MDOT = 2.0, 20.0, 0.002
CORPUS_TOML = """
[geometry]
family = "poiseuille"
n_base = 6
k_deform = 1

[train]
epochs = {epochs}

[sweep]
kind = "flow_diversity"
grid = [1, 2, 4]
"""
EPOCHS = 400


def _cli(*argv):
    lines = []
    return run(["--jobs", "1", *argv], log=lines.append), lines


def _tube_solve(h, mdot=MDOT, offset=None, **kw):
    off = h / 2 if offset is None else offset
    tube = build_vessel(straight_centerline(L, R, start=(off, off, 0.0)), 48)
    dom = build_domain(tube, h)
    sdf = signed_distance(tube, dom.mask, dom.mask)
    cfg = SolverConfig(inlet_profile="parabolic", **kw)
    solver = FlowSolver(dom.cells, FluidProps(1050.0, 0.00345), FlowCondition(mdot), cfg, sdf=sdf.values)
    state, ok = solver.run_to_steady()
    assert ok, f"h={h}: not converged"
    return solver, state


def _centreline(state, h):
    z = np.linspace(0.6 * L, 0.8 * L, 5)
    pts = np.column_stack([np.full(5, h / 2), np.full(5, h / 2), z])
    return float(np.mean(np.linalg.norm(sample_velocity(state, pts), axis=1)))


@pytest.fixture(scope="module")
def corpus(tmp_path_factory, monkeypatch_module):
    """Six tilted tubes at the eight canonical flows, generated and simulated through the CLI."""
    base = tmp_path_factory.mktemp("accept")
    root = base / "corpus"
    cfg = base / "pipeline.toml"
    cfg.write_text(CORPUS_TOML.format(epochs=EPOCHS))
    for stage in ("gen", "sim"):
        code, lines = _cli("--root", str(root), "--config", str(cfg), stage)
        assert code == EXIT_OK, lines
    return root, cfg


@pytest.fixture(scope="module")
def monkeypatch_module():
    mp = pytest.MonkeyPatch()
    mp.delenv("ANEUFLOW_ROOT", raising=False)
    yield mp
    mp.undo()


@pytest.mark.criterion(1, "Poiseuille validation")
def test_poiseuille_validation(detail):
    h = 0.25
    t0 = time.process_time()
    solver, state = _tube_solve(h)
    elapsed = time.process_time() - t0
    hp = hagen_poiseuille(MDOT, R * 1e-3, L * 1e-3)
    assert hp["U_max"] == pytest.approx(0.30315, abs=5e-6) and hp["dp"] == pytest.approx(20.92, abs=5e-3)
    assert 2 * R / h >= 16
    uc, dp = _centreline(state, h), pressure_drop(state)
    detail(f"centreline {uc:.5f} m/s ({uc / 0.30315 - 1:+.2%}), dp {dp:.3f} Pa ({dp / 20.92 - 1:+.2%}), {elapsed:.0f} s")
    assert abs(uc / 0.30315 - 1) <= 0.05
    assert abs(dp / 20.92 - 1) <= 0.05
    assert elapsed <= 600


@pytest.mark.criterion(2, "conservation and incompressibility")
def test_conservation(corpus, detail):
    root, _ = corpus
    rows = list(csv.DictReader((root / "reports/sim_report.csv").open()))
    ok = [r for r in rows if r["status"] == "ok"]
    assert len(ok) >= 48
    worst_flux = max(float(r["flux_err"]) for r in ok)
    worst_div = max(float(r["max_div"]) / float(r["div_bound"]) for r in ok)
    detail(f"{len(ok)} cases, max flux error {worst_flux:.1e}, max |div|/bound {worst_div:.1e}")
    assert worst_flux <= 0.005
    assert worst_div <= 1.0


@pytest.mark.criterion(3, "grid convergence")
def test_grid_convergence(detail):
    hs = (1.0, 0.5, 0.25)
    exact = hagen_poiseuille(MDOT, R * 1e-3, L * 1e-3)["dp"]
    # one fixed axis for all three grids, so the grids are nested around the same tube
    errs = [abs(pressure_drop(_tube_solve(h, offset=0.0)[1]) / exact - 1) for h in hs]
    orders = [math.log(errs[i] / errs[i + 1], 2) for i in range(2)]
    detail("dp errors " + " / ".join(f"{e:.2%}" for e in errs) + ", orders " + " / ".join(f"{p:.2f}" for p in orders))
    assert errs[0] > errs[1] > errs[2]
    assert min(orders) >= 1.0


@pytest.mark.criterion(4, "Stokes linearity")
def test_stokes_linearity(detail):
    a = _tube_solve(0.5, 0.001, convection_enabled=False, dt=5e-5)[1]
    b = _tube_solve(0.5, 0.002, convection_enabled=False, dt=5e-5)[1]
    eu = np.max(np.abs(b.q - 2 * a.q)) / np.max(np.abs(b.q))
    ep = np.max(np.abs(b.p - 2 * a.p)) / np.max(np.abs(b.p))
    detail(f"velocity {eu:.1e}, pressure {ep:.1e}")
    assert eu <= 1e-6 and ep <= 1e-6


@pytest.mark.criterion(5, "hemodynamic formulas and V_max trend")
def test_hemodynamic_formulas(corpus, detail):
    assert volume_change_rate(2.0, 2.0) == 0.0
    assert volume_change_rate(2.5, 2.0) == 0.25
    assert max_velocity(np.zeros((4, 3))) == 0.0
    assert max_velocity(np.array([[3.0, 4.0, 0.0]])) == 5.0
    vel = np.array([[1.0, 0.0, 0.0]])
    assert np.all(normalized_pressure(np.full(6, 100.0), 1050.0, vmax=1.0) == 100.0 / 525.0)
    assert round(100.0 / 525.0, 6) == 0.190476
    assert np.all(normalized_pressure(np.zeros(6), 1050.0, vmax=1.0) == 0.0)
    assert normalized_dp(np.full(6, 42.0), 1050.0, vmax=1.0) == 0.0
    assert normalized_dp(np.array([100.0, 50.0, 0.0]), 1050.0, vmax=max_velocity(vel)) == 100.0 / 525.0
    with pytest.raises(ValueError):
        normalized_pressure(np.ones(3), 1050.0, vmax=0.0)
    root, _ = corpus
    by_case = {}
    for r in csv.DictReader((root / "reports/sim_report.csv").open()):
        by_case.setdefault(int(r["case_id"]), [])
    sums = []
    for cid in by_case:
        meta = json.loads((root / f"Meta/{cid}.json").read_text())
        sums += [CaseSummary(**s) for s in meta["summaries"].values()]
    means = []
    for f in CANONICAL_FLOWS:
        vals = [s.v_max for s in sums if math.isclose(s.mdot, f)]
        assert len(vals) == 6
        means.append(np.mean(vals))
    per_case = all(
        np.all(np.diff([s.v_max for s in sorted((s for s in sums if s.case_id == c), key=lambda s: s.mdot)]) > 0) for c in by_case
    )
    detail("mean V_max " + ", ".join(f"{m:.3f}" for m in means) + " m/s")
    assert np.all(np.diff(means) > 0) and per_case


@pytest.mark.criterion(6, "metric suite")
def test_metric_suite(detail):
    y = np.array([0.0, 1.0, 2.0])
    assert mnae(y, np.array([0.1, 1.1, 1.9])) == pytest.approx(0.05, rel=1e-14)
    assert l2bar(np.array([3.0, 4.0]), np.zeros(2)) == 1.0
    a, b = np.array([1.0, 2.0]), np.array([2.0, 4.0])
    assert mse(a, b) == 2.5 and mae(a, b) == 1.5
    rng = np.random.default_rng(6)
    worst_inv, worst_off, sens = 0.0, 0.0, []
    for _ in range(200):
        t = [rng.standard_normal(rng.integers(3, 40)) for _ in range(rng.integers(1, 5))]
        p = [x + 0.2 * rng.standard_normal(x.shape) for x in t]
        c, s = rng.uniform(-50, 50), rng.uniform(0.1, 20)
        m0 = mnae(t, p)
        worst_inv = max(worst_inv, abs(mnae([s * x + c for x in t], [s * x + c for x in p]) / m0 - 1))
        off = rng.uniform(-3, 3)
        worst_off = max(worst_off, abs(mse(t, [x + off for x in t]) - off * off) / off**2, abs(mae(t, [x + off for x in t]) - abs(off)) / abs(off))
        u = [np.abs(x) * 0.01 + 0.001 for x in t]
        uh = [x + 0.005 for x in u]
        sens.append(u_shift_eval(u, uh).l2bar < channel_report(u, uh).l2bar)
    shifted = l2bar(np.array([0.01]) - 0.5, np.array([0.02]) - 0.5)
    detail(f"MNAE affine drift {worst_inv:.1e}, offset identity drift {worst_off:.1e}, shifted l2bar {shifted:.4f}")
    assert worst_inv <= 1e-9 and worst_off <= 1e-9
    assert all(sens) and round(shifted, 4) == 0.0204


@pytest.mark.criterion(7, "autodiff gradient checks")
def test_gradient_checks(detail):
    worst_op = 0.0
    for name, (shapes, fn) in sorted(OPS.items()):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            xs = [_away_from_zero(rng, s) for s in shapes]
            wrng, weights = np.random.default_rng(1000 + seed), {}

            def w(shape):
                if shape not in weights:
                    weights[shape] = _w(wrng, shape)
                return weights[shape]

            worst_op = max(worst_op, grad_check(lambda *t: fn(*t, w), xs))
    worst_model = {}
    for variant in ("deeponet", "deeponet-winattn"):
        worst = 0.0
        for seed in range(10):
            rng = np.random.default_rng(seed)
            model = DeepONet(ModelConfig(variant=variant, seed=seed, **TINY))
            cases = [_case(rng, 40, 0.001), _case(rng, 35, 0.0035, cid=2)]
            lats = np.stack([c.lattice for c in cases])
            qs = [c.points.inputs for c in cases]
            tg = np.concatenate([c.points.targets for c in cases])
            slots = _slots(model)

            def f(*ts):
                for (obj, leaf), t in zip(slots, ts):
                    setattr(obj, leaf, t)
                return total_loss(model(lats, [c.mdot for c in cases], qs), tg, np.array([1.0, 0.5, 0.5, 0.5]))

            worst = max(worst, grad_check(f, [p.data.copy() for p in model.parameters()]))
        worst_model[variant] = worst
    detail(f"ops {worst_op:.1e}, " + ", ".join(f"{k} {v:.1e}" for k, v in worst_model.items()))
    assert worst_op <= 1e-5 and max(worst_model.values()) <= 1e-5


@pytest.mark.criterion(8, "surrogate learnability and flow-diversity ordering")
def test_surrogate_learnability(corpus, detail):
    root, cfg = corpus
    t0 = time.process_time()
    code, lines = _cli("--root", str(root), "--config", str(cfg), "train")
    assert code == EXIT_OK, lines
    assert _cli("--root", str(root), "--config", str(cfg), "eval")[0] == EXIT_OK
    train_time = time.process_time() - t0
    metrics = {(r["channel"], r["metric"]): float(r["value"]) for r in csv.DictReader((root / "reports/eval/deeponet/metrics.csv").open())}
    val = {c: metrics[(c, "mnae")] for c in "puvw"}
    code, lines = _cli("--root", str(root), "--config", str(cfg), "sweep")
    assert code == EXIT_OK, lines
    final = {}
    for r in csv.DictReader((root / "reports/sweep/flow_diversity/sweep_summary.csv").open()):
        final[r["value"]] = np.mean([float(r[f"val_mnae_{c}"]) for c in "puvw"])
    detail(f"val MNAE after {EPOCHS} epochs " + " ".join(f"{c}={v:.3f}" for c, v in val.items())
           + f" ({train_time / 60:.1f} min); sweep mean val MNAE " + ", ".join(f"{k} flows {v:.3f}" for k, v in final.items()))
    assert max(val.values()) <= 0.15
    assert train_time <= 2 * 3600
    assert final["1"] >= final["4"]


@pytest.mark.criterion(9, "loss arithmetic")
def test_loss_arithmetic(detail):
    weights = TrainConfig().weights
    assert list(weights) == [1e5, 1e3, 1e3, 1e3]
    rng = np.random.default_rng(9)
    preds = [rng.standard_normal((n, 4)) for n in (5, 11, 3)]
    tgts = [rng.standard_normal((n, 4)) for n in (5, 11, 3)]
    hand = math.fsum(
        math.fsum(w * math.fsum((p[i, c] - t[i, c]) ** 2 for i in range(len(p))) for c, w in enumerate((1e5, 1e3, 1e3, 1e3)))
        for p, t in zip(preds, tgts)
    )
    got = total_loss(preds, tgts, weights).item()
    r = np.array([[math.sqrt(2e-5), math.sqrt(1e-3), math.sqrt(1e-3), math.sqrt(1e-3)]])
    five = total_loss(r, np.zeros((1, 4)), weights).item()
    detail(f"relative error {abs(got / hand - 1):.1e}, example {five!r}")
    assert abs(got / hand - 1) <= 1e-12
    assert abs(five / 5.0 - 1) <= 1e-12


@pytest.mark.criterion(10, "dataset I/O")
def test_dataset_io(tmp_path, detail):
    tube = build_vessel(straight_centerline(6.0, 1.0), 12)
    dom = build_domain(tube, 0.5)
    sdf = signed_distance(tube, dom.mask, dom.mask)
    rng = np.random.default_rng(10)
    recs = []
    for cid in range(1, 11):
        flows = [CANONICAL_FLOWS[cid % 8], CANONICAL_FLOWS[(cid + 3) % 8]]
        fields = {f: {r: RegionFields(r, rng.random((8 + cid, 3)), rng.standard_normal((8 + cid, 3)), rng.standard_normal(8 + cid))
                      for r in REGIONS} for f in flows}
        sums = {f: CaseSummary(cid, f, 0.3 + f, 2.0, 0.0, 500.0 * f, True) for f in flows}
        recs.append(CaseRecord(cid, tube, dom.mask, sdf, fields, sums, {"seed": cid}))
    a, b = tmp_path / "a", tmp_path / "b"
    for rec in recs:
        write_case(rec, a)
    for cid in range(1, 11):
        write_case(read_case(a, cid), b)
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    same = all((a / p).read_bytes() == (b / p).read_bytes() for p in files)
    assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    for rec in recs:
        back = read_case(a, rec.case_id)
        for f in rec.flows:
            for r in REGIONS:
                assert back.fields[f][r].as_array().tobytes() == rec.fields[f][r].as_array().tobytes()
    assert validate_layout(a) == []
    build_manifest(a)
    assert verify_manifest(a).ok
    target = a / "NPY" / "0.0015" / "array_wall_1.npy"
    raw = bytearray(target.read_bytes())
    raw[len(raw) // 2] ^= 0x10
    target.write_bytes(bytes(raw))
    problems = verify_manifest(a).problems()
    detail(f"{len(files)} files byte-identical after re-write; flipped byte reported as {problems}")
    assert same and problems == {"NPY/0.0015/array_wall_1.npy": "mismatch"}


@pytest.mark.criterion(11, "determinism of gen, sim, train and sweep")
def test_determinism(tmp_path, monkeypatch, detail):
    monkeypatch.delenv("ANEUFLOW_ROOT", raising=False)
    cfg = tmp_path / "small.toml"
    cfg.write_text("""
seed = 7

[geometry]
family = "poiseuille"
n_base = 2
k_deform = 1

[flows]
mdot = [0.001, 0.002, 0.003]

[model]
width = 16
depth = 2
latent = 8
lattice = 8
pool = 4

[train]
epochs = 4
batch_size = 2
eval_points = 200

[split]
n_train = 2
n_val = 1

[sweep]
kind = "flow_diversity"
grid = [1, 2]
""")
    trees = []
    for name in ("first", "second"):
        root = tmp_path / name
        for stage in ("gen", "sim", "train", "sweep"):
            code, lines = _cli("--root", str(root), "--config", str(cfg), stage)
            assert code == EXIT_OK, lines
        trees.append({p.relative_to(root).as_posix(): p.read_bytes() for p in root.rglob("*") if p.is_file()})
    diff = sorted(k for k in trees[0] if trees[0][k] != trees[1].get(k))
    detail(f"{len(trees[0])} files compared, {len(diff)} differ")
    assert set(trees[0]) == set(trees[1]) and not diff
