import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

from permahom.geometry import ObstacleShape, voxelize_cell  # noqa: E402
from permahom.saddle import SolverConfig  # noqa: E402


@pytest.fixture(scope="session")
def sphere():
    return ObstacleShape("sphere", radius=0.25)


@pytest.fixture(scope="session")
def tight():
    return SolverConfig(tol_mom=1e-10, tol_div=1e-10)


@pytest.fixture(scope="session")
def sphere8(sphere):
    return voxelize_cell(sphere, 8)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
