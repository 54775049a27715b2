import pytest

_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and short title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when != "call":
        return
    n, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    if report.failed:
        msg = str(report.longrepr).strip().splitlines()[-1] if report.longrepr else ""
        detail = f"{detail} | {msg}" if detail else msg
    _CRITERIA[n] = ("PASS" if report.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:>2} {status}: {title} -- {detail}")
