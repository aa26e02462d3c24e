import pytest

from aneuflow.flowsolve import FlowCondition, FlowSolver, FluidProps, SolverConfig
from aneuflow.geomsynth import build_vessel, straight_centerline
from aneuflow.voxdomain import build_domain, signed_distance


@pytest.fixture(scope="session")
def tube_flow():
    """Converged plug-inlet tube at h = 0.5 mm, mdot = 0.002 kg/s."""
    tube = build_vessel(straight_centerline(20.0, 2.0, start=(0.25, 0.25, 0.0)), 48)
    dom = build_domain(tube, 0.5)
    sdf = signed_distance(tube, dom.mask, dom.mask)
    solver = FlowSolver(dom.cells, FluidProps(), FlowCondition(0.002), SolverConfig(), sdf=sdf.values)
    state, ok = solver.run_to_steady()
    assert ok
    return solver, state


# -- acceptance summary -----------------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.fixture
def detail(request):
    """Collects measured values that the acceptance summary prints next to the verdict."""
    notes = []
    request.node._criterion_notes = notes
    return notes.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    number, title = mark.args
    if rep.when == "setup" and rep.passed:
        return
    _CRITERIA[number] = (title, rep.passed, "; ".join(getattr(item, "_criterion_notes", [])))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok, notes = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{notes}]" if notes else ""))
