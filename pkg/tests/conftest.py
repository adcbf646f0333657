import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from itd2d.fdm import FdGrid, solve_transient
from itd2d.model import assemble_model
from itd2d.params import CONFIG1, CONFIG2, REFERENCE_GEOMETRY

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# 15 W in the reference cell
STEP_Q = 15.0 / REFERENCE_GEOMETRY.volume()
STEP_SECONDS = 3000


@pytest.fixture(scope="session")
def model1():
    return assemble_model(REFERENCE_GEOMETRY, CONFIG1)


@pytest.fixture(scope="session")
def model2():
    return assemble_model(REFERENCE_GEOMETRY, CONFIG2)


@pytest.fixture(scope="session")
def fd_step():
    """Step-heat transients on the 200x200 oracle grid, keyed by config name."""
    cache = {}

    def get(name, grid=FdGrid(200, 200, 0.1)):
        key = (name, grid)
        if key not in cache:
            params = {"config1": CONFIG1, "config2": CONFIG2}[name]
            cache[key] = solve_transient(REFERENCE_GEOMETRY, params, np.full(STEP_SECONDS, STEP_Q), 1.0, grid=grid)
        return cache[key]

    return get


_RESULTS_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS_KEY] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: criterion(number, title, passed, detail)."""
    results = request.config.stash[_RESULTS_KEY]

    def record(number, title, passed, detail=""):
        results.append((number, title, bool(passed), detail))
        print(f"[criterion {number}] {'PASS' if passed else 'FAIL'}: {title} {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS_KEY, [])
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(results, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {number}. {title}  {detail}")
