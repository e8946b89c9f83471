import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def report_criterion():
    """Record the one-line verdict of an acceptance criterion."""

    def record(number: int, passed: bool, detail: str):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


def vamp_oracle_instance(seed: int):
    """Sparse regression with q <= 10, n >= 4q and a design of condition number below 10."""
    rng = np.random.default_rng(seed)
    q = int(rng.integers(2, 11))
    m = int(rng.integers(4 * q, 8 * q + 1))
    while True:
        A = rng.standard_normal((m, q))
        if np.linalg.cond(A) < 10:
            break
    alpha = np.where(rng.random(q) < 0.3, rng.choice([-1.0, 1.0], q) * rng.uniform(1, 3, q), 0.0)
    return A @ alpha + rng.standard_normal(m), A


def logit(p):
    p = np.clip(np.asarray(p, dtype=float), 1e-300, 1.0)
    return np.log(p) - np.log1p(-np.minimum(p, 1 - 1e-16))
