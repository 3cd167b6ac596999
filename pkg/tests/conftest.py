"""Collects per-criterion outcomes from tests marked ``criterion`` and prints one line each."""

import pytest

_RESULTS: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    number, title = marker.args
    entry = _RESULTS.setdefault(number, {"title": title, "failed": []})
    if report.failed:
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        status = "FAIL" if entry["failed"] else "PASS"
        line = f"criterion {number:>2}: {status}  {entry['title']}"
        if entry["failed"]:
            line += "  [failing: " + ", ".join(entry["failed"]) + "]"
        terminalreporter.write_line(line)
