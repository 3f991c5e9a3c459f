import os

import pytest
from hypothesis import HealthCheck, settings

# every engine run in the suite re-derives its accounting from the event log
os.environ["NOMADSIM_AUDIT"] = "1"

settings.register_profile("suite", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")


_CRITERIA: dict[int, tuple[str, str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when not in ("setup", "call"):
        return
    n, title = mark.args
    failed = call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception)
    prev = _CRITERIA.get(n, (title, "PASS", 0.0))
    status = "FAIL" if failed or prev[1] == "FAIL" else "PASS"
    _CRITERIA[n] = (title, status, prev[2] + (call.duration if call.when == "call" else 0.0))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, status, secs = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:>2} [{title}]: {status} ({secs:.1f}s)")
