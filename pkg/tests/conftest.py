import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "nslab",
    deadline=None,
    max_examples=int(os.environ.get("NSLB_HYPOTHESIS_EXAMPLES", "25")),
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
    derandomize=True,
)
settings.load_profile("nslab")

ACCEPTANCE_LINES = {}


def record_acceptance(number, passed, text):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {text}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
