import re

import pytest

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m or report.when not in ("setup", "call"):
        return
    if report.when == "setup" and report.passed:
        return
    detail = dict(report.user_properties).get("detail", "")
    _ACCEPTANCE.setdefault(int(m.group(1)), []).append((report.passed, report.nodeid.split("::")[-1], detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_ACCEPTANCE):
        parts = _ACCEPTANCE[crit]
        ok = all(p for p, _, _ in parts)
        detail = "; ".join(f"{name}: {d}" if d else name for _, name, d in parts)
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def detail(record_property):
    """Attach a one-line measurement summary to the acceptance report."""
    def put(text):
        record_property("detail", text)

    return put
