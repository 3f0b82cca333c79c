import numpy as np
import pytest

from srkcd import generate_nonconvex, generate_quadratic


@pytest.fixture(scope="session")
def quad_small():
    return generate_quadratic(200, 8, seed=3)


@pytest.fixture(scope="session")
def quad_reference():
    return generate_quadratic(1000, 50, seed=0)


@pytest.fixture(scope="session")
def nonconvex_small():
    return generate_nonconvex(300, 6, seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
