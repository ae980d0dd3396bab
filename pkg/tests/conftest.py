"""Shared fixtures and the acceptance-criteria summary hook."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    deadline=None,
    derandomize=True,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

# criterion number -> (passed, one-line detail); filled by test_acceptance.py
ACCEPTANCE_LOG: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LOG[number] = (bool(passed), detail)


@pytest.fixture
def record():
    return record_criterion


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LOG:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LOG):
        passed, detail = ACCEPTANCE_LOG[number]
        tr.write_line(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20260815)
