import numpy as np
import pytest
from hypothesis import settings

from mcamerican import ContractSpec, ProcessParams

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture
def table_mean_params():
    return ProcessParams(r=0.10, sigma=0.40, s0=100.0)


@pytest.fixture
def atm_put():
    return ContractSpec("vanilla-put", strike=100.0, expiry=0.5)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
