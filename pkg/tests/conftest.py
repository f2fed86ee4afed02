import pytest

_VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict():
    """Record a criterion's outcome, print it, and fail the test if it did not hold."""

    def record(criterion: int, passed: bool, detail: str) -> None:
        line = f"criterion {criterion:>2} {'PASS' if passed else 'FAIL'}: {detail}"
        _VERDICTS[criterion] = line
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[key])
