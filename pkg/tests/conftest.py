"""Collects the one-line acceptance verdicts and prints them after the run."""
import pytest

_VERDICTS = []


@pytest.fixture
def verdict():
    """Call ``verdict(number, text, ok, seconds)``; the line is shown in the summary."""

    def record(number, text, ok, seconds):
        line = f"ACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}  {text}  ({seconds:.1f} s)"
        _VERDICTS.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
