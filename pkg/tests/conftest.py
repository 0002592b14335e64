"""Shared fixtures: the expensive solve chains are built once per session."""

import numpy as np
import pytest

from sampled_ocp import (SolverOptions, SweepConfig, build_problem,
                         solve_lq_permanent, sweep)


@pytest.fixture(scope="session")
def di_problem():
    return build_problem("lq_double_integrator")


@pytest.fixture(scope="session")
def di6_problem():
    return build_problem("lq_double_integrator", u_bound=6.0)


@pytest.fixture(scope="session")
def aq_problem():
    return build_problem("affine_quadratic")


@pytest.fixture(scope="session")
def di_reference(di_problem):
    return solve_lq_permanent(di_problem.lq)


@pytest.fixture(scope="session")
def di_sweep(di_problem, di_reference):
    """Cascaded sweep N = 2..64 on the inactive-bound double integrator;
    the single most reused object in the suite."""
    cfg = SweepConfig(problem=di_problem, reference=di_reference,
                      resolutions=(2, 4, 8, 16, 32, 64))
    report, solutions = sweep(cfg, return_solutions=True)
    return report, solutions


@pytest.fixture(scope="session")
def di6_solutions(di6_problem, di_reference):
    """Cascaded solves N = 2..16 with the tighter control box."""
    cfg = SweepConfig(problem=di6_problem, reference=di_reference,
                      resolutions=(2, 4, 8, 16))
    _, solutions = sweep(cfg, return_solutions=True)
    return solutions


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
