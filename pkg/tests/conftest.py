import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stimqkd.field import Grid

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

LAMBDA = 810e-9


@pytest.fixture(scope="session")
def grid():
    return Grid.from_extent(256, 0.24)


@pytest.fixture(scope="session")
def fine_grid():
    return Grid.from_extent(512, 0.24)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance summary ---------------------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    """Record the outcome of one acceptance criterion for the end-of-run summary."""

    def record(number: int, passed: bool, detail: str) -> None:
        ACCEPTANCE[number] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
