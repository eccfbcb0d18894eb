import functools

import pytest

from twoitem.distributions import Custom, parse_distribution
from twoitem.solver import assemble_mechanism

EXACT_PAIRS = [
    ("uniform", "uniform"),
    ("monomial:c=1", "monomial:c=1"),
    ("monomial:c=0.5", "monomial:c=0.5"),
    ("exp:lambda=1", "exp:lambda=1"),
    ("uniform", "exp:lambda=1"),
]


@functools.lru_cache(maxsize=None)
def solved(spec1, spec2=None):
    d1 = parse_distribution(spec1)
    d2 = parse_distribution(spec2 or spec1)
    return assemble_mechanism(d1, d2)


def steep_custom():
    """Density 8/3 (1+t)^-3: heavy at the bottom, the bundle-only case."""
    k = 8.0 / 3.0
    return Custom(lambda t: k * (1 + t) ** -3, lambda t: -3 * k * (1 + t) ** -4,
                  lambda t: k * (1 - (1 + t) ** -2) / 2, name="steep")


@pytest.fixture(scope="session")
def uniform_mech():
    return solved("uniform")


@pytest.fixture(scope="session")
def exp_mech():
    return solved("exp:lambda=1")


@pytest.fixture(scope="session")
def mixed_mech():
    return solved("uniform", "exp:lambda=1")


@pytest.fixture(scope="session")
def powerlaw_mech():
    return solved("powerlaw:alpha=2")


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
