import random

import pytest

from statepredict.scenario import ScenarioConfig, pick_and_place_statechart, train
from statepredict.worldstore import WorldStore


@pytest.fixture(scope="session")
def chart():
    return pick_and_place_statechart()


@pytest.fixture(scope="session")
def trained_store():
    cfg = ScenarioConfig(seed=11)
    store = WorldStore()
    train(cfg, store, random.Random(cfg.seed), 200)
    return store


@pytest.fixture
def store3():
    """Three world states, counts 0->1 x3 and 0->2 x1."""
    from statepredict.statechart import StateId
    from statepredict.worldstore import WorldState

    s = WorldStore()
    for name in ("A", "B", "C"):
        s.intern(WorldState(StateId(("root", name))))
    for _ in range(3):
        s.record_transition(0, 1)
    s.record_transition(0, 2)
    return s


_criteria: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion this test checks")


def pytest_runtest_logreport(report):
    marker = getattr(report, "_criterion", None)
    if marker is None:
        return
    num, title = marker
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        prev = _criteria.get(num, (title, "PASS"))[1]
        status = "PASS" if report.outcome == "passed" and prev == "PASS" else "FAIL"
        _criteria[num] = (title, status)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    m = item.get_closest_marker("criterion")
    if m is not None:
        outcome.get_result()._criterion = m.args


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        title, status = _criteria[num]
        terminalreporter.write_line(f"criterion {num}: {status}  {title}")
