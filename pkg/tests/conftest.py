from pathlib import Path

import pytest
from mvfield.geometry import ChartSpec

_LINES = []


def record_line(line: str) -> None:
    _LINES.append(line)


@pytest.fixture
def report_line():
    return record_line


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def plane_chart():
    return ChartSpec.make(["x1", "x2"], ["y1", "y2"])


@pytest.fixture
def jet_chart():
    return ChartSpec.make(["x0", "x1"], ["y0"], jet=True)


@pytest.fixture
def problems_dir():
    return Path(__file__).resolve().parent.parent / "problems"
