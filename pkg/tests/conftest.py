"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion at the end of the run."""
from collections import defaultdict

import pytest

_OUTCOMES = defaultdict(list)  # criterion -> [(test name, passed, note)]
_TITLES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    _TITLES[number] = title
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        passed = rep.passed and not hasattr(rep, "wasxfail")
        note = ""
        if hasattr(rep, "wasxfail"):
            note = rep.wasxfail
        elif rep.failed and rep.longrepr is not None:
            note = str(getattr(rep.longrepr, "reprcrash", None) and rep.longrepr.reprcrash.message or "failed")
        _OUTCOMES[number].append((item.name, passed, note.splitlines()[0] if note else ""))


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        results = _OUTCOMES[number]
        ok = all(p for _, p, _ in results)
        tr.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {_TITLES[number]}")
        for name, passed, note in results:
            if not passed:
                tr.write_line(f"              {name}: {note}")
