import pytest

_ACCEPTANCE_LINES: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: slow end-to-end acceptance criteria")


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion, then assert it."""

    def record(number: int, checks: dict[str, bool], detail: str = "") -> None:
        ok = all(checks.values())
        failed = [name for name, passed in checks.items() if not passed]
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}"
        if detail:
            line += f"  {detail}"
        if failed:
            line += f"  [failed: {', '.join(failed)}]"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
