import numpy as np
import pytest

from shearflow.background import BoundarySpec, profile
from shearflow.core import Params

ACCEPTANCE_LINES = []


def sine_spec(params, amplitude):
    t = np.linspace(0.0, 1.0, params.n + 1)
    s = profile(t, "sine", amplitude)
    return BoundarySpec.from_perturbation(params, np.stack([s, s]), np.stack([s, s]), s, s, s)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def reference_params():
    return Params(mu=1.0, nu=0.0, gamma=2.0, alpha=1.0, n=64)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
