import numpy as np
import pytest

from usbf.array import AcquisitionConfig, array_pair, make_pulse


@pytest.fixture(scope="session")
def arrays():
    return array_pair(17, 0.220e-3, 0.044e-3)


@pytest.fixture(scope="session")
def small(arrays):
    return arrays[0]


@pytest.fixture(scope="session")
def large(arrays):
    return arrays[1]


@pytest.fixture(scope="session")
def pulse():
    return make_pulse(3.5e6, 1.75, 16e6)


@pytest.fixture(scope="session")
def cfg():
    return AcquisitionConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance verdicts, printed once at the end of the session
CRITERIA = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, text = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {text}")
