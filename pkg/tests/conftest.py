import pytest

VERDICTS: list[str] = []


@pytest.fixture
def verdict(capsys):
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""

    def record(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
        VERDICTS.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
