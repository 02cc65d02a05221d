"""Shared solved fixtures; session-scoped since solves are deterministic."""

import pytest

from sovdebt import SolverConfig, continuation_solve
from sovdebt.presets import base_setup, regime1_setup, regime2_setup


@pytest.fixture(scope="session")
def base_model():
    return base_setup()


@pytest.fixture(scope="session")
def base_solution(base_model):
    """BASE solved at the acceptance configuration (n = 801, eps -> 1e-6)."""
    params, costs, risk, salvage = base_model
    solution, trace = continuation_solve(params, costs, risk, salvage,
                                         SolverConfig(n=801))
    return solution, trace


@pytest.fixture(scope="session")
def regime1_solution():
    params, costs, risk, salvage = regime1_setup()
    solution, trace = continuation_solve(params, costs, risk, salvage,
                                         SolverConfig(n=801))
    return (params, costs, risk, salvage), solution


@pytest.fixture(scope="session")
def regime2_solution():
    params, costs, risk, salvage = regime2_setup()
    solution, trace = continuation_solve(params, costs, risk, salvage,
                                         SolverConfig(n=801))
    return (params, costs, risk, salvage), solution
