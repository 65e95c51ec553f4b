import numpy as np
import pytest

from sinkarima.synth import ProcessSpec, simulate_arma

# filled by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ar1_series():
    return simulate_arma(ProcessSpec(phi=(0.6,), mean=20.0, n=1000), 3)


@pytest.fixture
def white_noise():
    return np.random.default_rng(0).standard_normal(1000)
