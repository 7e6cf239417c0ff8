import math

import numpy as np
import pytest

from impulsive_chaos.config import build_system, example_config
from impulsive_chaos.schedule import ImpulseSchedule
from impulsive_chaos.signals import VectorSequence, lift_sequence, logistic_orbit, with_backward_orbit
from impulsive_chaos.system import QuasilinearImpulsiveSystem, SystemConstants

A_EX = np.array([[-6.0, 2.0], [-8.0, 1.0]])
B_EX = -2.0 / 3.0 * np.eye(2)
F_EX = ("0.1*cos(x2) + 0.3*sin(2*t)", "0.2*tanh(x1)")
H_EX = ("0.05*arctan(x1) + 0.4", "0.04*sin(x2)")
MAPS_EX = ["4.5*s", "(s+1)^3"]


def example_schedule():
    return ImpulseSchedule(2, math.pi, (0.5, (math.pi - 1) / 2))


def example_system(length=4000, f=F_EX, h=H_EX):
    seq = lift_sequence(with_backward_orbit(logistic_orbit(3.95, 0.23, length)), MAPS_EX)
    return QuasilinearImpulsiveSystem(A_EX, B_EX, f, h, example_schedule(), seq)


def example_constants():
    return SystemConstants(M_f=0.4473, M_h=0.4803, L_f=0.2, L_h=0.05, M_sigma=9.17878, N=4.9625, lam=2.5)


@pytest.fixture(scope="session")
def ex_sys():
    return example_system()


@pytest.fixture(scope="session")
def full_sys():
    """The worked example with the long orbit used by the diagnostics."""
    return build_system(example_config())


@pytest.fixture(scope="session")
def consts():
    return example_constants()


@pytest.fixture(scope="session")
def constant_sys():
    seq = VectorSequence.constant([1.0, 2.0], 4000)
    return QuasilinearImpulsiveSystem(A_EX, B_EX, F_EX, H_EX, example_schedule(), seq)


def example_witnesses(sys, compact=(0.0, 10.0), warmup=10, num=5):
    from impulsive_chaos.diagnostics import score_window_for
    from impulsive_chaos.signals import find_witnesses

    lo, hi = score_window_for(sys, compact, warmup)
    return find_witnesses(sys.perturbation, hi - lo, num, 0.5, window_start=lo)


@pytest.fixture(scope="session")
def diag(full_sys, consts):
    """Witnesses, derived constants and the shared solution windows of the example."""
    from impulsive_chaos.diagnostics import prepare_run
    from impulsive_chaos.system import compute_derived_constants

    wit = example_witnesses(full_sys)
    derived = compute_derived_constants(consts, full_sys, wit.delta0_est)
    run = prepare_run(full_sys, consts, derived, wit, (0.0, 10.0))
    return wit, derived, run


@pytest.fixture(scope="session")
def long_constant_sys():
    seq = VectorSequence.constant([1.0, 2.0], 1_000_000)
    return QuasilinearImpulsiveSystem(A_EX, B_EX, F_EX, H_EX, example_schedule(), seq)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
