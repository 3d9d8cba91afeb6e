import pytest

from helpers import TINY
from shapezsc.kitchen import bundled_layout, load_layout


@pytest.fixture
def r3():
    return bundled_layout("random3-mini")


@pytest.fixture
def tiny():
    return load_layout(TINY, "tiny")


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion: ``criterion(n, ok, detail)``."""

    def record(number, ok, detail):
        ACCEPTANCE_LINES.append(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
