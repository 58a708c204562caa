import pytest

_CRITERIA: dict[str, str] = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(number, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[str(number)] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
