import pytest

_VERDICTS: list[tuple[int, bool, str]] = []


@pytest.fixture
def verdict():
    """Record one acceptance line ``(criterion, passed, detail)``."""

    def record(number: int, passed: bool, detail: str) -> bool:
        _VERDICTS.append((number, bool(passed), detail))
        print(f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}")
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_VERDICTS, key=lambda v: v[0]):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}")
