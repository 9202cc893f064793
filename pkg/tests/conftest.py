import time
from typing import NamedTuple

import numpy as np
import pytest

from switched_kkt import SolverConfig, builtin_problem, qp_transform, solve
from switched_kkt.oracle import qp_enumerate, random_qp

PAPER_STARTS = {
    "qp-paper": (-0.25, 0.0),
    "rosenbrock": (1.0, -1.0),
    "hvac-paper": (23.0, 23.0, 1.0),
}

RANDOM_QP_SEED = 2024
RANDOM_QP_COUNT = 25
# the smallest eigenvalue of L can sit near 0.1, so the slow mode needs t of a few hundred;
# the step stays at the default because f(t) rises by about |g_eq| * step per sample while
# equalities are being restored, which a coarser step pushes past the monotonicity slack
RANDOM_QP_CONFIG = SolverConfig(step=1e-3, t_max=400.0)

ACCEPTANCE_LINES = []


class Run(NamedTuple):
    problem: object
    z0: tuple
    trajectory: object
    report: object
    seconds: float


class QpCase(NamedTuple):
    qp: object
    z0: np.ndarray
    run: Run
    oracle: object


@pytest.fixture(scope="session")
def paper_runs():
    runs = {}
    for name, z0 in PAPER_STARTS.items():
        prob = builtin_problem(name)
        start = time.perf_counter()
        traj, report = solve(prob, z0)
        runs[name] = Run(prob, z0, traj, report, time.perf_counter() - start)
    return runs


@pytest.fixture(scope="session")
def random_qp_cases():
    rng = np.random.default_rng(RANDOM_QP_SEED)
    cases = []
    for _ in range(RANDOM_QP_COUNT):
        qp, z0 = random_qp(rng)
        prob = qp_transform(qp)
        start = time.perf_counter()
        traj, report = solve(prob, z0, RANDOM_QP_CONFIG)
        run = Run(prob, tuple(z0), traj, report, time.perf_counter() - start)
        cases.append(QpCase(qp, z0, run, qp_enumerate(qp)))
    return cases


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
