"""Collects the acceptance verdicts and prints them after the run."""
import pytest

VERDICTS = {}


@pytest.fixture
def verdict():
    def record(number, title, passed, detail=""):
        VERDICTS[number] = (title, bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        title, ok, detail = VERDICTS[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n:2d}: {title}  [{detail}]")
