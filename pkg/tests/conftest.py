import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gaunlearn import dataset

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# Lines reported by the acceptance suite, echoed in the terminal summary.
CRITERIA = {}


def record_criterion(number, passed, detail):
    CRITERIA[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        passed, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def ortho3():
    return dataset.gen_orthonormal(3, 3, [1, -1, 1])


@pytest.fixture
def two_point():
    return dataset.Dataset(np.eye(2), np.array([1.0, -1.0]), "orthonormal")
