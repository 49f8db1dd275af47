import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion's verdict for the terminal summary."""
    name = request.node.name

    def record(passed: bool, detail: str = "") -> None:
        _ACCEPTANCE.append((name, passed, detail))
        assert passed, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")
