from __future__ import annotations

import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from viraldde import kernels
from viraldde.model import Parameters
from viraldde.simulate import Constant, InitialData, Ramp

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

SET_A = dict(s=10.0, d=0.1, k=0.5, k_d=0.5, delta=1.0, p=1.0, N=10.0, N_d=10.0,
             mu=5.0, q=0.2, b=0.5)
SET_B = dict(s=1.0, d=1.0, k=0.1, k_d=0.1, delta=1.0, p=1.0, N=5.0, N_d=5.0,
             mu=1.0, q=0.2, b=0.5)
SET_C = {**SET_A, "b": 5.0}

# lines printed at the end of the session by the acceptance module
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def set_a() -> Parameters:
    return Parameters(**SET_A)


@pytest.fixture
def set_b() -> Parameters:
    return Parameters(**SET_B)


@pytest.fixture
def set_c() -> Parameters:
    return Parameters(**SET_C)


@pytest.fixture
def generic_init() -> InitialData:
    return InitialData(Constant(20.0), Constant(1.0), Ramp(2.0, 1.0), 1.0)


def kernel_pairs():
    return [
        (kernels.make_dirac(0.0), kernels.make_dirac(0.0)),
        (kernels.make_uniform(1.0), kernels.make_dirac(0.5)),
        (kernels.make_centered_uniform(1.0, 0.4), kernels.make_uniform(0.5)),
    ]
