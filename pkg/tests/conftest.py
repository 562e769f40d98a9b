import pytest

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k, label): acceptance criterion k")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    k, label = marker.args
    entry = _results.setdefault(k, [label, True, False])
    if report.when == "call" or report.failed:
        entry[2] = True
        if not report.passed:
            entry[1] = False


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_results):
        label, ok, ran = _results[k]
        status = "PASS" if ok and ran else "FAIL"
        terminalreporter.write_line(f"criterion {k}: {status}  {label}")
