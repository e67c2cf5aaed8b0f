import functools

import pytest

from shadowlab import build_grid, zoo
from shadowlab.recurrence import recurrence_report

ZOO_NAMES = ["identity", "rotation", "doubling", "north_south", "sin2_circle", "quartic_interval"]


@functools.lru_cache(maxsize=None)
def cached_report(name, mesh=1e-3, d=1e-3, horizon=10_000):
    system = zoo(name)
    grid = build_grid(system.space, mesh)
    return system, grid, recurrence_report(system, grid, d, horizon)


@pytest.fixture
def report_for():
    return cached_report
