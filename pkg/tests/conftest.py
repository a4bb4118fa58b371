"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): an acceptance criterion")


@pytest.fixture
def detail(request):
    """Append a short measured-value note to the criterion's summary line."""
    notes = []
    request.node.criterion_notes = notes
    return notes.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        number, title = mark.args
        status = "SKIP" if rep.skipped else "PASS" if rep.passed else "FAIL"
        _RESULTS[item.nodeid] = (number, title, status, "; ".join(getattr(item, "criterion_notes", [])))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, status, note in sorted(_RESULTS.values(), key=lambda r: r[0]):
        line = f"{status} criterion {number}: {title}"
        terminalreporter.write_line(line + (f" ({note})" if note else ""))
