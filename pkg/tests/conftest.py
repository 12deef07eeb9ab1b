import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


_RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    props = dict(item.user_properties)
    timing = f" [{props['runtime_s']:.2f} s]" if "runtime_s" in props else ""
    status = "PASS" if rep.passed else "FAIL"
    item.config.stash[_RESULTS].append((number, f"criterion {number}: {status}  {title}{timing}"))


def pytest_terminal_summary(terminalreporter, config):
    lines = sorted(config.stash.get(_RESULTS, []))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in lines:
            terminalreporter.write_line(line)
