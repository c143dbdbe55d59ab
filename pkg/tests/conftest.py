import pytest

# (criterion number, passed, detail) appended by tests/test_acceptance.py
ACCEPTANCE_LINES: list[tuple[int, bool, str]] = []


@pytest.fixture
def acceptance_report():
    def report(number: int, passed: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append((number, passed, detail))
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")

    return report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")
