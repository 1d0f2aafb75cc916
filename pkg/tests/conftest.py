import time

import numpy as np
import pytest

from postreg.builtins import example_setup
from postreg.regulator import mismatch_along
from postreg.sim import integrate, tail_stats

ACCEPTANCE_LINES = []


def record_acceptance(line):
    """Store a criterion verdict line; printed in the terminal summary."""
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def _timed_example_run(q, g):
    plant, config, z0 = example_setup(q=q, g=g)
    t0 = time.perf_counter()
    traj = integrate(plant, config, z0, 200.0)
    elapsed = time.perf_counter() - t0
    return dict(plant=plant, config=config, traj=traj, elapsed=elapsed,
                stats=tail_stats(traj, 0.2))


@pytest.fixture(scope="session")
def example_q0_run():
    run = _timed_example_run(0.0, 5.0)
    run["mismatch"] = mismatch_along(run["traj"], run["plant"], run["config"], tail_start=160.0)
    return run


@pytest.fixture(scope="session")
def example_q1_runs():
    runs = {}
    t0 = time.perf_counter()
    for g in (5.0, 8.0, 10.0):
        runs[g] = _timed_example_run(1.0, g)
    runs["elapsed"] = time.perf_counter() - t0
    return runs


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
