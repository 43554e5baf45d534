import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

CRITERIA = {}


def record_criterion(number, passed, detail):
    """Remember one acceptance line; printed in the terminal summary."""
    CRITERIA[number] = (bool(passed), detail)
    line = f"CRITERION {number:2d}: {'PASS' if passed else 'FAIL'} - {detail}"
    print(line)
    return line


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        passed, detail = CRITERIA[k]
        terminalreporter.write_line(f"CRITERION {k:2d}: {'PASS' if passed else 'FAIL'} - {detail}")


@pytest.fixture
def corridor_pocket():
    """A 1-wide corridor with one side pocket above its middle cell."""
    from cameta.gridworld import GridMap

    return GridMap.from_rows([
        "##.##",
        ".....",
    ])
