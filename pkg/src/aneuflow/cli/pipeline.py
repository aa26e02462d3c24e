"""Pipeline stages. Each returns a :class:`StageResult`; all outputs live under the corpus root."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..atomic import write_if_changed
from ..caselib import CaseRecord, build_manifest, flow_dirname, list_cases, read_case, read_meta, write_case
from ..evalbench import SweepError, evaluate_predictions, make_split, model_predictor, sweep
from ..flowsolve import ConfigError, FlowCondition, FlowSolver, SolverError
from ..geomsynth import (
    MeshError,
    build_vessel,
    mesh_volume,
    sample_deformations,
    stl_bytes,
    stl_from_bytes,
    straight_centerline,
    volume_change_rate,
)
from ..hemometrics import (
    QUANTITIES,
    CaseSummary,
    distribution_summary,
    extract_region_fields,
    histogram_csv,
    mass_flux,
    summarize,
    write_histogram_svg,
)
from ..surrogate import DeepONet, build_cases, derive_seed, fit_normalizer, load_run, train
from ..voxdomain import DomainError, build_domain, signed_distance
from .config import PipelineConfig

REPORTS = "reports"
EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL, EXIT_FAILED = 0, 1, 2, 3


@dataclass
class StageResult:
    stage: str
    done: int = 0
    skipped: int = 0
    failed: list = field(default_factory=list)     # (case id or run, message)
    outputs: list = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        if not self.failed:
            return EXIT_OK
        return EXIT_FAILED if self.done + self.skipped == 0 else EXIT_PARTIAL

    def line(self) -> str:
        return f"{self.stage}: {self.done} done, {self.skipped} skipped, {len(self.failed)} failed"


def _digest(obj) -> str:
    return hashlib.blake2b(json.dumps(obj, sort_keys=True).encode(), digest_size=8).hexdigest()


def _csv(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue().encode()


def _fmt(x) -> str:
    return repr(float(x)) if x is not None else ""


def _map(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# -- gen ----------------------------------------------------------------------

def _axis(rng, tilt: float) -> np.ndarray:
    # tilt off z with an azimuth away from the grid planes, so every velocity component carries signal
    th = rng.uniform(0.5, 1.0) * tilt
    ph = np.pi / 4 + rng.uniform(-0.4, 0.4) + np.pi / 2 * rng.integers(4)
    return np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])


def _canonical(mesh):
    """Mesh as it reads back from its own STL, so later rewrites are byte-stable."""
    return stl_from_bytes(stl_bytes(mesh))


def _base_entries(cfg: PipelineConfig, i: int):
    g = cfg.geometry
    rng = np.random.default_rng(derive_seed(cfg.seed, "base", i))
    r = float(rng.uniform(*g.radius))
    axis = _axis(rng, g.tilt)
    base = build_vessel(straight_centerline(g.length, r, axis=axis), g.segments)
    params = {"base": i, "radius": r, "axis": axis.tolist(), "family": g.family}
    if g.family == "aneurysm":
        meshes = sample_deformations(base, g.k_deform, seed=derive_seed(cfg.seed, "deform", i))
        v_ref = mesh_volume(base)
    else:
        meshes = [build_vessel(straight_centerline(g.length, r * (1 - 0.08 * j), axis=axis), g.segments) for j in range(g.k_deform)]
        v_ref = None
    out = []
    for j, m in enumerate(meshes):
        m = _canonical(m)
        vol = mesh_volume(m)
        out.append((i * g.k_deform + j + 1, m, dict(params, variant=j, volume=vol, v_ref=v_ref if v_ref else vol)))
    return out


def _gen_one(args):
    cfg, root, i, gen_hash = args
    ids = [i * cfg.geometry.k_deform + j + 1 for j in range(cfg.geometry.k_deform)]
    if all(_gen_current(root, c, gen_hash) for c in ids):
        return [], len(ids), []
    done, failed = [], []
    try:
        entries = _base_entries(cfg, i)
    except (MeshError, ValueError) as exc:
        return [], 0, [(c, f"geometry: {exc}") for c in ids]
    for cid, mesh, params in entries:
        try:
            dom = build_domain(mesh, cfg.grid.spacing)
            sdf = signed_distance(mesh, dom.mask, dom.mask)
            prov = {"seed": cfg.seed, "gen_hash": gen_hash, "geometry": params, "sim": {}}
            write_case(CaseRecord(cid, mesh, dom.mask, sdf, {}, {}, prov), root, overwrite=True)
            done.append(cid)
        except (DomainError, MeshError, ValueError) as exc:
            failed.append((cid, f"{type(exc).__name__}: {exc}"))
    return done, 0, failed


def _gen_current(root: Path, cid: int, gen_hash: str) -> bool:
    try:
        return read_meta(root, cid).get("provenance", {}).get("gen_hash") == gen_hash
    except Exception:
        return False


def gen(cfg: PipelineConfig, root, jobs: int = 1, log=print) -> StageResult:
    """``n_base * k_deform`` geometry entries (mesh, mask, sdf) with ids 1..N*k."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    gen_hash = cfg.section_hash("seed", "geometry", "grid")
    res = StageResult("gen")
    for done, skipped, failed in _map(_gen_one, [(cfg, root, i, gen_hash) for i in range(cfg.geometry.n_base)], jobs):
        res.done += len(done)
        res.skipped += skipped
        res.failed += failed
        for cid in done:
            log(f"gen: case {cid} written")
        for cid, msg in failed:
            log(f"gen: case {cid} FAILED: {msg}")
    rows = []
    for cid in list_cases(root):
        p = read_meta(root, cid).get("provenance", {})
        g = p.get("geometry", {})
        if p.get("gen_hash") == gen_hash:
            rows.append([cid, g.get("base"), g.get("variant"), g.get("family"), _fmt(g.get("radius")), _fmt(g.get("volume")),
                         _fmt(volume_change_rate(g["volume"], g["v_ref"]))])
    out = root / REPORTS / "gen_report.csv"
    write_if_changed(out, _csv(["case_id", "base", "variant", "family", "radius_mm", "volume_mm3", "delta_v"], rows))
    build_manifest(root)
    res.outputs.append(out)
    return res


# -- sim ----------------------------------------------------------------------

def _sim_hash(cfg: PipelineConfig, gen_hash: str, mdot: float) -> str:
    return _digest({"gen": gen_hash, "fluid": cfg.section_hash("fluid", "solver", "grid"), "mdot": flow_dirname(mdot)})


def _sim_pending(cfg: PipelineConfig, meta: dict) -> list[float]:
    prov = meta.get("provenance", {})
    sims = prov.get("sim", {})
    return [f for f in cfg.flows if sims.get(flow_dirname(f), {}).get("hash") != _sim_hash(cfg, prov.get("gen_hash"), f)]


def solve_flow(cfg: PipelineConfig, dom, sdf, mdot: float):
    """Run one steady solve; returns ``(state or None, diagnostics dict)``."""
    solver = FlowSolver(dom.cells, cfg.fluid, FlowCondition(mdot), cfg.solver, sdf=sdf.values)
    try:
        state, ok = solver.run_to_steady(raise_on_fail=False)
    except SolverError as exc:
        return None, {"status": "failed", "message": f"{type(exc).__name__}: {exc}"}
    diag = {
        "steps": int(state.step),
        "flux_err": abs(mass_flux(state, "outlet", cfg.fluid.rho) - mdot) / mdot,
        "max_div": float(np.max(np.abs(solver.divergence(state)))),
        "div_bound": float(solver.divergence_bound()),
    }
    if not ok:
        return None, dict(diag, status="failed", message=f"not converged within {cfg.solver.max_steps} steps")
    return state, dict(diag, status="ok", message="")


def _sim_one(args):
    cfg, root, cid = args
    meta = read_meta(root, cid)
    pending = _sim_pending(cfg, meta)
    if not pending:
        return cid, 0, True, []
    rec = read_case(root, cid)
    prov = rec.provenance
    dom = build_domain(rec.mesh, cfg.grid.spacing)
    sdf = rec.sdf
    if sdf is None or sdf.dims != dom.mask.dims:
        sdf = signed_distance(rec.mesh, dom.mask, dom.mask)
    geo = prov.get("geometry", {})
    delta_v = volume_change_rate(geo["volume"], geo["v_ref"]) if geo else 0.0
    keep = {flow_dirname(f) for f in cfg.flows}
    fields = {f: v for f, v in rec.fields.items() if flow_dirname(f) in keep}
    sums = {f: v for f, v in rec.summaries.items() if flow_dirname(f) in keep}
    prov["sim"] = {k: v for k, v in prov.get("sim", {}).items() if k in keep}
    failures = []
    for mdot in pending:
        key = flow_dirname(mdot)
        state, diag = solve_flow(cfg, dom, sdf, mdot)
        fields.pop(mdot, None)
        sums.pop(mdot, None)
        if state is not None:
            fields[mdot] = extract_region_fields(state)
            sums[mdot] = summarize(cid, mdot, state, cfg.fluid.rho, cfg.fluid.mu, delta_v, True)
        else:
            failures.append((f"{cid}@{key}", diag["message"]))
        prov["sim"][key] = dict(diag, hash=_sim_hash(cfg, prov.get("gen_hash"), mdot))
        # persist after every flow so an interrupted run resumes where it stopped
        write_case(CaseRecord(cid, rec.mesh, rec.mask, rec.sdf, fields, sums, prov), root, overwrite=True)
    return cid, len(pending), False, failures


def sim(cfg: PipelineConfig, root, jobs: int = 1, log=print) -> StageResult:
    """Solve every (geometry, flow) pair not already solved under this configuration."""
    root = Path(root)
    res = StageResult("sim")
    ids = list_cases(root)
    for cid, n, skipped, failures in _map(_sim_one, [(cfg, root, c) for c in ids], jobs):
        if skipped:
            res.skipped += len(cfg.flows)
            continue
        res.done += n - len(failures)
        res.failed += failures
        log(f"sim: case {cid}: {n - len(failures)}/{n} flows converged")
    rows = []
    for cid in ids:
        sims = read_meta(root, cid).get("provenance", {}).get("sim", {})
        for key in sorted(sims, key=float):
            d = sims[key]
            rows.append([cid, key, d["status"], d.get("steps", ""), _fmt(d.get("flux_err")), _fmt(d.get("max_div")),
                         _fmt(d.get("div_bound")), d.get("message", "")])
    out = root / REPORTS / "sim_report.csv"
    write_if_changed(out, _csv(["case_id", "mdot", "status", "steps", "flux_err", "max_div", "div_bound", "message"], rows))
    build_manifest(root)
    res.outputs.append(out)
    if not ids:
        res.failed.append(("corpus", "no geometries to simulate"))
    return res


# -- analyze ------------------------------------------------------------------

def corpus_summaries(root) -> list[CaseSummary]:
    out = []
    for cid in list_cases(root):
        for s in read_meta(root, cid).get("summaries", {}).values():
            out.append(CaseSummary(**s))
    return sorted(out, key=lambda s: (s.case_id, s.mdot))


def analyze(cfg: PipelineConfig, root, log=print) -> StageResult:
    """Per-case summary table, shared-bin histograms per quantity and per-flow means."""
    root = Path(root)
    out = root / REPORTS / "analysis"
    sums = corpus_summaries(root)
    res = StageResult("analyze", done=len(sums))
    cols = ["case_id", "mdot", "v_max", "dp_star", "delta_v", "re", "converged"]
    rows = [[s.case_id, flow_dirname(s.mdot), _fmt(s.v_max), _fmt(s.dp_star), _fmt(s.delta_v), _fmt(s.re), int(s.converged)] for s in sums]
    write_if_changed(out / "summaries.csv", _csv(cols, rows))
    hist = distribution_summary(sums) if sums else []
    write_if_changed(out / "histograms.csv", histogram_csv(hist).encode())
    means = []
    for q in QUANTITIES:
        by = {}
        for s in sums:
            by.setdefault(flow_dirname(s.mdot), []).append(getattr(s, q))
        means += [[q, f, _fmt(np.mean(v)), len(v)] for f, v in sorted(by.items(), key=lambda kv: float(kv[0]))]
    write_if_changed(out / "flow_means.csv", _csv(["quantity", "mdot", "mean", "count"], means))
    if sums:
        for q in QUANTITIES:
            tmp = out / f".{q}.svg.tmp"
            write_histogram_svg(hist, q, tmp)
            write_if_changed(out / f"{q}.svg", tmp.read_bytes())
            tmp.unlink()
    res.outputs += sorted(out.iterdir())
    log(f"analyze: {len(sums)} cases summarised")
    return res


# -- surrogate stages -----------------------------------------------------------

def load_corpus(root) -> list[CaseRecord]:
    return [r for r in (read_case(root, c) for c in list_cases(root)) if r.flows]


def corpus_fingerprint(root) -> str:
    return _digest({str(c): read_meta(root, c).get("files", {}) for c in list_cases(root)})


def _stamp_ok(path: Path, stamp: str) -> bool:
    return path.is_file() and path.read_text().strip() == stamp


def train_stage(cfg: PipelineConfig, root, log=print) -> StageResult:
    root = Path(root)
    out = root / REPORTS / "train" / cfg.model.variant
    stamp = _digest({"cfg": cfg.section_hash("model", "train", "split"), "corpus": corpus_fingerprint(root)})
    res = StageResult("train")
    if _stamp_ok(out / "stamp", stamp):
        res.skipped = 1
        return res
    records = load_corpus(root)
    keys = [(r.case_id, f) for r in records for f in r.flows]
    split = make_split(keys, cfg.split)
    norm = fit_normalizer(records, split.train)
    tr = build_cases(records, norm, split.train, cfg.model.lattice)
    va = build_cases(records, norm, split.val, cfg.model.lattice)
    log(f"train: {len(tr)} train / {len(va)} val cases, {cfg.train.epochs} epochs")
    step = max(1, cfg.train.epochs // 10)
    train(DeepONet(cfg.model), tr, va, cfg.train, norm, out_dir=out,
          log=lambda e, loss: log(f"train: epoch {e} loss {loss:.6g}") if e % step == 0 else None)
    write_if_changed(out / "split.json", (json.dumps(split.to_dict(), indent=1) + "\n").encode())
    write_if_changed(out / "stamp", (stamp + "\n").encode())
    res.done = 1
    res.outputs += sorted(out.iterdir())
    return res


def eval_stage(cfg: PipelineConfig, root, predict_fn=None, log=print) -> StageResult:
    """Metrics on the validation split of the trained run; ``predict_fn(case)`` overrides the model."""
    root = Path(root)
    run = root / REPORTS / "train" / cfg.model.variant
    model, _, norm = load_run(run)
    split = json.loads((run / "split.json").read_text())
    val = [tuple(k) for k in split["val"]]
    records = [r for r in load_corpus(root) if any(k[0] == r.case_id for k in val)]
    cases = build_cases(records, norm, val, model.cfg.lattice)
    rep = evaluate_predictions(predict_fn or model_predictor(model, norm), cases)
    out = root / REPORTS / "eval" / cfg.model.variant
    write_if_changed(out / "metrics.csv", _csv(["channel", "metric", "value"], [[c, m, _fmt(v)] for c, m, v in rep.rows()]))
    per = []
    for ch, r in rep.channels.items():
        for m, vals in r.per_case.items():
            per += [[c.case_id, flow_dirname(c.mdot), ch, m, _fmt(v)] for c, v in zip(cases, vals)]
    write_if_changed(out / "per_case.csv", _csv(["case_id", "mdot", "channel", "metric", "value"], per))
    log("eval: " + ", ".join(f"{c} mnae={r.mnae:.4f}" for c, r in rep.channels.items()))
    return StageResult("eval", done=len(cases), outputs=[out / "metrics.csv", out / "per_case.csv"])


def sweep_stage(cfg: PipelineConfig, root, jobs: int = 1, log=print) -> StageResult:
    root = Path(root)
    kind, grid = cfg.sweep.kind, list(cfg.sweep.grid)
    out = root / REPORTS / "sweep" / kind
    stamp = _digest({"cfg": cfg.section_hash("seed", "model", "train", "split", "sweep"), "corpus": corpus_fingerprint(root)})
    res = StageResult("sweep")
    if _stamp_ok(out / "stamp", stamp):
        res.skipped = len(grid)
        return res
    records = load_corpus(root)
    split = make_split([(r.case_id, f) for r in records for f in r.flows], cfg.split)
    try:
        sw = sweep(kind, grid, records, split, cfg.model, cfg.train, cfg.seed, out_dir=out, jobs=jobs)
    except SweepError as exc:
        raise ConfigError(f"sweep plan: {exc}") from exc
    for run, err in zip(sw.runs, sw.errors):
        if err is None:
            res.done += 1
            log(f"sweep: {run.name} ok")
        else:
            res.failed.append((run.name, err))
            log(f"sweep: {run.name} FAILED: {err}")
    if not res.failed:
        write_if_changed(out / "stamp", (stamp + "\n").encode())
    res.outputs += [out / "metrics.csv", out / "sweep_summary.csv"]
    return res
