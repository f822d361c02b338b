import math

import pytest
from scipy.special import ndtr

from killsens.model import CoefficientModel, TestFunction, TimeGrid


def phibar(x):
    return float(ndtr(-x))


def npdf(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


# Brownian boundary derivative 2 e^{1/2} Phibar(1), from the closed-form Gaussian integral
BROWNIAN_BOUNDARY_DERIV = 2 * math.exp(0.5) * phibar(1.0)


@pytest.fixture
def brownian():
    return CoefficientModel("constant", {"b": 0.0, "sigma": 1.0, "L": 0.0})


@pytest.fixture
def drifted():
    return CoefficientModel("constant", {"b": 0.5, "sigma": 1.0, "L": 0.0})


@pytest.fixture
def tanh_model():
    return CoefficientModel("tanh-drift")


@pytest.fixture
def expm():
    return TestFunction("expm", 0.0)


def grid(n, T=1.0):
    return TimeGrid(T, n)


# ---------------------------------------------------------------- acceptance lines

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per criterion; printed now and in the terminal summary."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def record(number, passed, detail):
        line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line, flush=True)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
