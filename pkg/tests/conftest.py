import numpy as np
import pytest

from nlkg.field_core import PowerSum
from nlkg.ground_state import shoot


@pytest.fixture(scope="session")
def octic():
    return PowerSum(((1.0, 8.0),))


@pytest.fixture(scope="session")
def cubic3():
    return PowerSum(((0.25, 4.0),))


@pytest.fixture(scope="session")
def gs1(octic):
    return shoot(octic, 1, 1.0, r_max=30.0, n=16384)


@pytest.fixture(scope="session")
def gs3(cubic3):
    return shoot(cubic3, 3, 1.0, r_max=30.0, n=16384)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
