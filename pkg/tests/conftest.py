"""Collects one pass/fail line per acceptance criterion and prints them at the end of the run."""

import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    n = marker.args[0]
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "measured")
    if rep.failed and rep.when != "call":
        detail = f"{rep.when} error: {rep.longrepr.reprcrash.message if hasattr(rep.longrepr, 'reprcrash') else rep.longrepr}"
    _RESULTS[n] = ("PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        status, detail = _RESULTS[n]
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {detail}")
