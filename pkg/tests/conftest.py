import time

import numpy as np
import pytest

from hopfpursuit.cli_io import load_scenario
from hopfpursuit.sim import run_closed_loop

# criterion number -> [title, outcome, details of passing tests, first failure]
_CRITERIA: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    entry = _CRITERIA.setdefault(n, [title, "PASS", [], ""])
    if report.failed:
        entry[1] = "FAIL"
        entry[3] = entry[3] or report.longreprtext.strip().splitlines()[-1][:160]
    elif report.skipped and entry[1] == "PASS":
        entry[1] = "SKIP"
    elif report.when == "call":
        detail = getattr(item, "criterion_detail", None)
        if detail:
            entry[2].append(detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, status, details, failure = _CRITERIA[n]
        detail = failure if status == "FAIL" else "; ".join(details)
        line = f"criterion {n:2d} {status}: {title}"
        terminalreporter.write_line(line + (f" [{detail}]" if detail else ""))


@pytest.fixture
def detail(request):
    """Attach a one-line measurement to the acceptance summary."""
    def set_detail(text):
        request.node.criterion_detail = text
    return set_detail


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_RUNS = {}


@pytest.fixture(scope="session")
def closed_loop():
    """Shipped scenario runs, each simulated once per session: name -> (cfg, log, result,
    wall seconds)."""
    def run(name):
        if name not in _RUNS:
            cfg = load_scenario(name)
            t0 = time.perf_counter()
            traj, res = run_closed_loop(cfg)
            _RUNS[name] = (cfg, traj, res, time.perf_counter() - t0)
        return _RUNS[name]
    return run
