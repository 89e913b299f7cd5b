import pytest

_LINES = []


@pytest.fixture(scope="session")
def report():
    """Collects one line per acceptance criterion; printed in the terminal summary."""
    def add(number, ok, text):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {text}"
        _LINES.append(line)
        print(line)
        return ok
    return add


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
