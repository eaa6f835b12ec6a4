"""Acceptance bookkeeping: one PASS/FAIL/SKIP line per criterion after the run.

Tests opt in with ``@pytest.mark.criterion(n, "title")``; a criterion passes
only when every test carrying its number passes.
"""

from collections import defaultdict

import pytest

_OUTCOMES: dict[int, list[str]] = defaultdict(list)
_TITLES: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    _TITLES[number] = title
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _OUTCOMES[number].append("skipped" if report.skipped else report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        outcomes = _OUTCOMES[number]
        if any(o == "failed" for o in outcomes):
            status = "FAIL"
        elif all(o == "skipped" for o in outcomes):
            status = "SKIP"
        else:
            status = "PASS"
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {_TITLES[number]}")
