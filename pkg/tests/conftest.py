import numpy as np
import pytest

from stochpoisson.connection import LEVI_CIVITA
from stochpoisson.geometry import Polynomial
from stochpoisson.poisson import linear_lie_poisson


def table(m, **terms):
    """Helper: ``table(3, e200=0.5)`` -> {"2,0,0": 0.5}."""
    return {",".join(k[1:]): v for k, v in terms.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def so3_structure():
    # {x^i, x^j} = eps_ijk x^k
    return linear_lie_poisson(LEVI_CIVITA, name="so3")


@pytest.fixture
def norm2():
    return Polynomial(3, np.eye(3, dtype=int) * 2, np.ones(3), name="norm2")


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


@pytest.fixture
def acceptance_report(request):
    """Call with ``(number, title, passed, detail)``; prints and stores one line."""
    lines = request.config.stash[ACCEPTANCE_LINES]

    def report(number, title, passed, detail=""):
        line = f"criterion {number} [{title}]: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        print(line)
        lines.append(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
