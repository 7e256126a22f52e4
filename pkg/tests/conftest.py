import re

import numpy as np
import pytest

from waveguide.evolution import EvolutionConfig, InitialData, run_experiment
from waveguide.grid import default_grid
from waveguide.groundstate import ground_state, groundstate_grid, to_physical
from waveguide.soliton import omega_p

CRITERIA = {
    1: "closed-form soliton residual",
    2: "negative eigenvalue anchor",
    3: "kernel anchors",
    4: "threshold reproduction",
    5: "instability eigenvalue continuation",
    6: "ground-state scaling and small-frequency limit",
    7: "bifurcation",
    8: "second-eigenvalue test",
    9: "evolution conservation and Strang order",
    10: "stability and instability experiments",
    11: "continuity of the minimization value",
}

_outcomes: dict[int, list[bool]] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _outcomes.setdefault(int(m.group(1)), []).append(report.outcome == "passed")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        if n not in _outcomes:
            continue
        status = "PASS" if all(_outcomes[n]) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {CRITERIA[n]}")


@pytest.fixture(scope="session")
def continuity_scan():
    """Physical ground states for p=3 on omega = 0.1, 0.2, ..., 1.0."""
    p = 3.0
    omegas = np.round(np.linspace(0.1, 1.0, 10), 12)
    results = [to_physical(ground_state(p, w, groundstate_grid(p, w))) for w in omegas]
    return omegas, results


@pytest.fixture(scope="session")
def stable_run_half_threshold():
    p = 3.0
    w = 0.5 * omega_p(p)
    cfg = EvolutionConfig(default_grid(p, w, ny=16), w, 1e-3, 50.0, record_every=200,
                          initial=InitialData("soliton_plus_chi", 1e-3))
    return cfg, run_experiment(cfg)


@pytest.fixture(scope="session")
def unstable_run():
    p = 3.0
    cfg = EvolutionConfig(default_grid(p, 1.0, ny=16), 1.0, 1e-3, 10.0, record_every=50,
                          initial=InitialData("soliton_plus_chi", 1e-4))
    return cfg, run_experiment(cfg)
