from __future__ import annotations

import pytest

_ACCEPTANCE: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(number, title): exit criterion covered by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    row = _ACCEPTANCE.setdefault(number, {"title": title, "outcomes": []})
    if report.when == "call" or (report.when == "setup" and not report.passed):
        row["outcomes"].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        row = _ACCEPTANCE[number]
        outcomes = row["outcomes"]
        if any(o == "failed" for o in outcomes):
            verdict = "FAIL"
        elif outcomes and all(o == "skipped" for o in outcomes):
            verdict = "SKIP"
        elif outcomes:
            verdict = "PASS"
        else:
            verdict = "NOT RUN"
        terminalreporter.write_line(f"[{verdict}] {number}. {row['title']} "
                                    f"({len(outcomes)} checks)")
