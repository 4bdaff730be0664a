import numpy as np
import pytest

from stirapsim.config import build_scenario, load_scenario
from stirapsim.statespace import build_space

_CRITERIA: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, text = mark.args
    status = "PASS" if rep.passed else "FAIL"
    prev = _CRITERIA.get(number)
    if prev is None or prev[0] == "PASS":
        _CRITERIA[number] = (status, text)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA, key=lambda n: int(n)):
        status, text = _CRITERIA[number]
        terminalreporter.write_line(f"[{status}] criterion {number}: {text}")


@pytest.fixture(scope="session")
def space31():
    return build_space(3, 1)


@pytest.fixture(scope="session")
def qst():
    return build_scenario(load_scenario("qst-fig2"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
