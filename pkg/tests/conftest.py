import re

_CRITERIA = {}


def pytest_runtest_logreport(report):
    m = re.match(r"test_(A\d+)_", report.nodeid.split("::")[-1])
    if not m:
        return
    if report.when == "call" or report.failed:
        # several tests may share a criterion; any failure fails it
        status, detail = _CRITERIA.get(m.group(1), ("PASS", ""))
        if not report.passed:
            status = "FAIL"
        detail = detail or dict(report.user_properties).get("detail", "")
        _CRITERIA[m.group(1)] = (status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: int(k[1:])):
        status, detail = _CRITERIA[key]
        terminalreporter.write_line(f"{key} {status}  {detail}")
