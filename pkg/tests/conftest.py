import os

import pytest
from hypothesis import HealthCheck, settings

# derandomized so the suite is reproducible; numerical examples are slow-ish
settings.register_profile("lab", derandomize=True, deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "lab"))


@pytest.fixture
def small_grid():
    from sdlab.grid import Grid
    return Grid(3, 1.0, 17)


# one summary line per acceptance criterion, printed after the run
_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    def record(number, passed, detail):
        _ACCEPTANCE[number] = (bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
