import numpy as np
import pytest

from sdr.substrate import kernels, precision


@pytest.fixture
def f64():
    with precision("float64"):
        yield


@pytest.fixture(params=["python", "compiled"] if kernels.HAVE_COMPILED else ["python"])
def backend(request):
    with kernels.use_backend(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = {}


def record(criterion, title, ok, detail):
    """Store one acceptance line; printed by the terminal summary below."""
    ACCEPTANCE[criterion] = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {title}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (isinstance(k, str), str(k))):
        terminalreporter.write_line(ACCEPTANCE[key])
