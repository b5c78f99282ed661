from fractions import Fraction

import pytest

from thinobstacle.geometry import build_grid
from thinobstacle.solver import make_boundary_data, solve

L32 = Fraction(3, 2)
ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_addoption(parser):
    parser.addoption("--skip-slow", action="store_true", help="skip the desk-scale acceptance suite")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--skip-slow"):
        skip = pytest.mark.skip(reason="--skip-slow given")
        for item in items:
            if "slow" in item.keywords:
                item.add_marker(skip)


@pytest.fixture(scope="session")
def small_solves():
    """A few cheap 2D solves shared by the unit tests."""
    cache = {}

    def get(name, res=129, n=2, **params):
        key = (name, res, n, tuple(sorted(params.items())))
        if key not in cache:
            kind = params.pop("kind", "profile")
            cache[key] = solve(build_grid(n, res), make_boundary_data(kind, n, **params))
        return cache[key]

    return get


@pytest.fixture(scope="session")
def acceptance_log(pytestconfig):
    """Collects one line per acceptance criterion for the terminal summary."""
    return pytestconfig.stash.setdefault(ACCEPTANCE_LINES, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
