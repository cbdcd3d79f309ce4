import numpy as np
import pytest

from bdsdelab import (BDSDEProblem, DriverF, DriverG, TerminalCondition,
                      TimeGrid, generate_paths, make_driver, make_g)


@pytest.fixture
def linear_ode_problem():
    """dY = -Y dt backwards from xi = 1: Y_0 = e, no noise anywhere."""
    return BDSDEProblem(
        f=make_driver("linear", a=1.0, b=0.0),
        g=make_g("zero"),
        xi=TerminalCondition.constant(1.0),
        grid=TimeGrid(1.0, 64),
        w_dim=1)


@pytest.fixture
def power23_problem():
    return BDSDEProblem(
        f=make_driver("power23"),
        g=make_g("zero"),
        xi=TerminalCondition.constant(0.0),
        grid=TimeGrid(1.0, 64),
        w_dim=1)


@pytest.fixture
def noisy_problem():
    """Linear drift plus a constant doubly-stochastic load."""
    return BDSDEProblem(
        f=make_driver("linear", a=1.0, b=0.0),
        g=make_g("constant", values=0.3),
        xi=TerminalCondition.constant(1.0),
        grid=TimeGrid(1.0, 40),
        w_dim=1)


@pytest.fixture
def small_bundle(noisy_problem):
    return generate_paths(noisy_problem.grid, 1, 1, outer=2, inner=400,
                          seed=5)
