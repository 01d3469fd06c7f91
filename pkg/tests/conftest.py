from __future__ import annotations

import pytest

from sigmasched.core import UserProvidedSchedule
from sigmasched.data import Dataset, reference_config, synth_cohort

_criteria: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    num = title = None
    for name, args in getattr(report, "user_properties", []):
        if name == "criterion":
            num, title = args
    if num is None:
        return
    entry = _criteria.setdefault(num, {"title": title, "passed": 0, "failed": []})
    if report.passed:
        entry["passed"] += 1
    else:
        entry["failed"].append(report.nodeid.split("::")[-1])


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            item.user_properties.append(("criterion", tuple(marker.args)))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria, key=int):
        entry = _criteria[num]
        status = "FAIL" if entry["failed"] else "PASS"
        n = entry["passed"]
        line = f"[{status}] criterion {num}: {entry['title']} ({n} check{'s' * (n != 1)} passed"
        if entry["failed"]:
            line += f"; failed: {', '.join(entry['failed'])}"
        terminalreporter.write_line(line + ")")


@pytest.fixture(scope="session")
def cohort_a() -> Dataset:
    return synth_cohort(reference_config())


@pytest.fixture
def schedule() -> UserProvidedSchedule:
    return UserProvidedSchedule("A", 450.0, 1260.0, 540.0, 1320.0)
