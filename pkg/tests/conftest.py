import numpy as np
import pytest

from latticecrack.geometry import DomainSpec, build_lattice
from latticecrack.model import MaterialParams


@pytest.fixture
def params():
    return MaterialParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_square():
    """Unit square with no prescribed layer."""
    return DomainSpec((0.0, 1.0, 0.0, 1.0), (0.0, 1.0, 0.0, 1.0), ())


@pytest.fixture
def small_lattice(unit_square):
    return build_lattice(unit_square, 0.25)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
