"""Collects outcomes of tests tagged ``@pytest.mark.criterion(k)`` and prints
one PASS/FAIL line per acceptance criterion at the end of the session."""

import pytest

CRITERIA = range(1, 8)
_outcomes = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    # a failure in setup or call counts against the criterion; skips do not
    if report.when == "call" or report.failed:
        _outcomes.setdefault(marker.args[0], {})[item.nodeid] = report.passed


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for k in CRITERIA:
        checks = _outcomes.get(k)
        if not checks:
            terminalreporter.write_line(f"criterion {k}: NOT RUN")
            continue
        failed = [node.split("::")[-1] for node, ok in checks.items() if not ok]
        status = "FAIL" if failed else "PASS"
        line = f"criterion {k}: {status} ({len(checks) - len(failed)}/{len(checks)} checks)"
        if failed:
            line += " failing: " + ", ".join(failed)
        terminalreporter.write_line(line)
