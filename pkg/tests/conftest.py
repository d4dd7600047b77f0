import numpy as np
import pytest
from hypothesis import settings

from paraharnack.core_fields import Field, Grid

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid1():
    return Grid(1, 256, 16.0)


@pytest.fixture(scope="session")
def gaussian(grid1):
    return Field.from_function(grid1, lambda x: np.exp(-x**2 / 2))


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_line():
    """Record one PASS/FAIL summary line for an acceptance criterion."""
    def record(number, title, ok, detail):
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
