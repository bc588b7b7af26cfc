"""Shared pytest plumbing: one summary line per acceptance gate."""

import pytest

ACCEPTANCE_LINES = []


@pytest.fixture()
def acceptance_report(request):
    """Record the detail string shown next to this test's PASS/FAIL line."""
    def record(detail: str) -> None:
        request.node.user_properties.append(("acceptance_detail", detail))
    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when != "call" or "test_acceptance" not in item.nodeid:
        return
    detail = dict(item.user_properties).get("acceptance_detail", "")
    if rep.passed:
        ACCEPTANCE_LINES.append(f"PASS {item.name}: {detail}")
    elif rep.failed:
        reason = ""
        if rep.longrepr is not None:
            text = str(rep.longrepr).strip().splitlines()
            reason = text[-1][:200] if text else ""
        ACCEPTANCE_LINES.append(f"FAIL {item.name}: {reason}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
