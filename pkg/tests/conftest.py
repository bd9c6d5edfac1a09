import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES = {}


def record_acceptance(number, title, passed, detail, gated=True):
    status = ("PASS" if passed else "FAIL") if gated else "INFO"
    ACCEPTANCE_LINES[number] = f"criterion {number:>2} [{status}] {title}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])


def random_instance(seed, n=6, m=4, dim=2, density=0.4, directed=False):
    """Random binary network/attribute pair with a matching random state."""
    from aplsm.vbem import VariationalState

    rng = np.random.default_rng(seed)
    y = (rng.random((n, n)) < density).astype(float)
    if not directed:
        y = np.triu(y, 1)
        y = y + y.T
    np.fill_diagonal(y, 0.0)
    x = (rng.random((n, m)) < density).astype(float)
    a = rng.normal(size=(dim, dim))
    b = rng.normal(size=(dim, dim))
    state = VariationalState(
        rng.normal(size=(n, dim)), 0.2 * a @ a.T / dim + 0.05 * np.eye(dim),
        rng.normal(size=(m, dim)), 0.2 * b @ b.T / dim + 0.05 * np.eye(dim),
        float(rng.normal()), float(rng.normal()))
    return y, x, state


@pytest.fixture
def fixture_dir():
    from pathlib import Path
    return Path(__file__).resolve().parents[1] / "data" / "synthetic_elite"
