import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from octree_mg.grid import build_grid
from octree_mg.operator import BoundaryPolicy, build_system
from octree_mg.scenes import uniform_target

settings.register_profile(
    "default", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def two_level_grid(extent=(2, 1, 1)):
    """Level-0 tile next to a refined one: one refinement interface at x = 1."""
    return build_grid(extent, lambda t: 1 if (t.level == 0 and t.ijk[0] == 0) else 0)


@pytest.fixture(scope="session")
def uniform16():
    return build_grid(1, uniform_target(1))


@pytest.fixture(scope="session")
def two_level():
    return two_level_grid()


@pytest.fixture(scope="session")
def closed_two_level(two_level):
    return build_system(two_level, None, BoundaryPolicy.closed(), keep_faces=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
