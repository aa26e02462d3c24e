import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aneuflow.hemometrics import (
    CaseSummary,
    MetricError,
    distribution_summary,
    extract_region_fields,
    flow_means,
    histogram_csv,
    mass_flux,
    max_velocity,
    normalized_dp,
    normalized_pressure,
    summarize,
    write_histogram_svg,
)

RHO = 1050.0


def test_max_velocity_examples():
    assert max_velocity(np.zeros((5, 3))) == 0.0
    assert max_velocity([[3.0, 4.0, 0.0]]) == 5.0
    with pytest.raises(MetricError):
        max_velocity(np.zeros((0, 3)))


def test_normalized_pressure_examples():
    p = np.full(10, 100.0)
    assert np.allclose(normalized_pressure(p, RHO, vmax=1.0), 0.190476, atol=5e-7)
    assert not np.any(normalized_pressure(np.zeros(4), RHO, vmax=1.0))
    with pytest.raises(MetricError):
        normalized_pressure(p, RHO, vmax=0.0)


def test_normalized_dp_examples():
    assert normalized_dp(np.full(6, 42.0), RHO, vmax=0.7) == 0.0
    assert normalized_dp(np.array([0.0, 50.0, 100.0]), RHO, vmax=1.0) == pytest.approx(0.190476, abs=5e-7)
    assert normalized_dp(np.array([0.0, 100.0]), RHO, vmax=1.0) == 100.0 / 525.0


@settings(max_examples=50)
@given(
    st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30),
    st.floats(-1e4, 1e4),
    st.floats(0.05, 3.0),
)
def test_dp_star_offset_invariant(p, c, vmax):
    p = np.array(p)
    a = normalized_dp(p, RHO, vmax)
    b = normalized_dp(p + c, RHO, vmax)
    assert b == pytest.approx(a, rel=1e-9, abs=1e-9 * (1 + abs(c)) / vmax**2)


@settings(max_examples=50)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 10.0))
def test_dp_star_dynamic_similarity(seed, k):
    rng = np.random.default_rng(seed)
    vel = rng.standard_normal((20, 3))
    p = rng.standard_normal(20) * 50
    a = normalized_dp(p, RHO, max_velocity(vel))
    b = normalized_dp(k * k * p, RHO, max_velocity(k * vel))
    assert b == pytest.approx(a, rel=1e-12)


def test_state_quantities(tube_flow):
    solver, state = tube_flow
    vmax = max_velocity(state)
    cv = state.cell_velocity().reshape(-1, 3)[state.ops.fluid_cells]
    assert np.all(np.linalg.norm(cv, axis=1) <= vmax)
    assert 0.15 < vmax < 2.0
    assert normalized_dp(state, RHO) >= 0


def test_zero_flow_guard(tube_flow):
    solver, state = tube_flow
    z = state.copy()
    z.q[:] = 0
    with pytest.raises(MetricError):
        normalized_pressure(z, RHO)


def test_mass_flux(tube_flow):
    solver, state = tube_flow
    assert mass_flux(state, "inlet", RHO) == pytest.approx(0.002, rel=1e-3)
    assert mass_flux(state, "outlet", RHO) == pytest.approx(0.002, rel=5e-3)
    assert mass_flux(state, "wall", RHO) == 0.0
    assert mass_flux(state, state.ops.cells.inlet_id, RHO) == pytest.approx(0.002, rel=1e-3)
    with pytest.raises(MetricError):
        mass_flux(state, "sides", RHO)


def test_region_fields(tube_flow):
    solver, state = tube_flow
    f = extract_region_fields(state)
    assert set(f) == {"inlet", "internal", "outlet", "wall"}
    assert len(f["internal"]) == state.ops.n_fluid
    assert not np.any(f["wall"].uvw)
    for r in f.values():
        arr = r.as_array()
        assert arr.shape[1] == 7 and np.all(np.isfinite(arr))
        key = np.lexsort((arr[:, 0], arr[:, 1], arr[:, 2]))
        assert np.array_equal(key, np.arange(len(arr)))
    assert not np.any(f["outlet"].p)
    assert f["inlet"].p.mean() > 0
    # boundary face rows sit on the ends of the tube
    assert f["inlet"].xyz[:, 2].max() < 0.5 and f["outlet"].xyz[:, 2].min() > 19.5
    again = extract_region_fields(state)
    assert all(f[k].equals(again[k]) for k in f)


def _summaries(vmax_by_flow):
    out = []
    i = 0
    for flow, vals in vmax_by_flow.items():
        for v in vals:
            i += 1
            out.append(CaseSummary(i, flow, v, 10 * v, 0.01 * i, 100.0, True))
    return out


def test_single_case_histogram():
    rows = distribution_summary(_summaries({0.002: [0.4]}))
    assert len(rows) == 3
    assert all(r[4] == 1 for r in rows)


def test_histogram_matches_bruteforce():
    rng = np.random.default_rng(3)
    data = {0.001: rng.uniform(0, 1, 40), 0.003: rng.uniform(0.5, 2, 60)}
    rows = distribution_summary(_summaries(data), bins=10)
    allv = np.concatenate(list(data.values()))
    lo, hi = allv.min(), allv.max()
    width = (hi - lo) / 10
    for flow, vals in data.items():
        got = [r[4] for r in rows if r[0] == "v_max" and r[1] == flow]
        brute = [0] * 10
        for v in vals:
            brute[min(int((v - lo) / width), 9)] += 1
        assert got == brute
    text = histogram_csv(rows)
    parsed = list(csv.reader(io.StringIO(text)))
    assert parsed[0] == ["quantity", "flow", "bin_lo", "bin_hi", "count"]
    assert len(parsed) == 1 + len(rows)


def test_flow_means_and_svg(tmp_path):
    s = _summaries({0.001: [0.2, 0.3], 0.002: [0.5, 0.6]})
    assert [m for _, m in flow_means(s, "v_max")] == pytest.approx([0.25, 0.55])
    rows = distribution_summary(s, bins=5)
    p1, p2 = tmp_path / "a.svg", tmp_path / "b.svg"
    write_histogram_svg(rows, "v_max", p1)
    write_histogram_svg(rows, "v_max", p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert p1.read_text().lstrip().startswith("<?xml")


def test_summary_invariants(tube_flow):
    solver, state = tube_flow
    s = summarize(7, 0.002, state, RHO, 0.00345, 0.0, True)
    assert s.re == pytest.approx(184.5, rel=0.03)
    with pytest.raises(MetricError):
        CaseSummary(1, 0.002, -1.0, 0.0, 0.0, 0.0, True)
    with pytest.raises(MetricError):
        CaseSummary(1, 0.002, 1.0, float("nan"), 0.0, 0.0, True)
