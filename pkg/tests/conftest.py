import pytest

_GATE_LINES = []


class Gate:
    """Collects one verdict line per acceptance criterion."""

    def record(self, name: str, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _GATE_LINES.append(line)
        print(line)
        return ok


@pytest.fixture(scope="session")
def gate():
    return Gate()


def pytest_terminal_summary(terminalreporter):
    if _GATE_LINES:
        terminalreporter.section("acceptance gate")
        for line in _GATE_LINES:
            terminalreporter.write_line(line)
