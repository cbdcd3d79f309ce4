"""Problem containers: grids, drivers, terminal data, validation."""

import numpy as np
import pytest

from bdsdelab import (BDSDEProblem, DriverEvaluationError, DriverF, DriverG,
                      GridSolution, ParamFamily, TerminalCondition, TimeGrid,
                      make_driver, make_g, validate_problem)


# ---------------------------------------------------------------------------
# TimeGrid

def test_grid_nodes():
    grid = TimeGrid(2.0, 4)
    np.testing.assert_allclose(grid.nodes, [0.0, 0.5, 1.0, 1.5, 2.0])
    assert grid.dt == 0.5
    assert grid.steps == 4


@pytest.mark.parametrize("T,N", [(0.0, 4), (-1.0, 4), (1.0, 0), (1.0, -2)])
def test_grid_rejects_degenerate(T, N):
    with pytest.raises(ValueError):
        TimeGrid(T, N)


# ---------------------------------------------------------------------------
# DriverF

def test_driver_call_shapes():
    f = DriverF(fn=lambda t, y, z: y + z[:, 0], growth=2.0)
    assert f(0.0, 1.0, np.zeros(1)) == 1.0
    out = f(0.0, np.array([1.0, 2.0]), np.array([[3.0], [4.0]]))
    np.testing.assert_allclose(out, [4.0, 6.0])


def test_driver_rejects_bad_constants():
    with pytest.raises(ValueError):
        DriverF(fn=lambda t, y, z: y, growth=0.0)
    with pytest.raises(ValueError):
        DriverF(fn=lambda t, y, z: y, growth=np.inf)
    with pytest.raises(ValueError):
        DriverF(fn=lambda t, y, z: y, growth=1.0, lipschitz=-1.0)


def test_driver_flags_non_finite_output():
    f = DriverF(fn=lambda t, y, z: np.log(y), growth=1.0)
    with np.errstate(invalid="ignore"):
        with pytest.raises(DriverEvaluationError):
            f(0.0, np.array([-1.0, 1.0]), np.zeros((2, 1)))


def test_g_driver_constants():
    with pytest.raises(ValueError):
        DriverG(fn=lambda t, y, z: y[:, None], c=0.0, alpha=0.5)
    with pytest.raises(ValueError):
        DriverG(fn=lambda t, y, z: y[:, None], c=1.0, alpha=1.0)
    g = make_g("linear_y", slopes=0.3)
    out = g(0.0, np.array([1.0, 2.0]), np.zeros((2, 1)))
    np.testing.assert_allclose(out, [[0.3], [0.6]])


# ---------------------------------------------------------------------------
# TerminalCondition

def test_terminal_constant_and_shift():
    xi = TerminalCondition.constant(2.0)
    paths = np.zeros((5, 3, 1))
    np.testing.assert_allclose(xi(paths), 2.0)
    np.testing.assert_allclose(xi.shifted(0.5)(paths), 2.5)
    np.testing.assert_allclose(xi.scaled(3.0)(paths), 6.0)
    assert xi.kind == "constant"


def test_terminal_of_terminal_sees_only_endpoint():
    xi = TerminalCondition.of_terminal(lambda wT: wT[:, 0] ** 2)
    paths = np.random.default_rng(0).normal(size=(7, 4, 1))
    np.testing.assert_allclose(xi(paths), paths[:, -1, 0] ** 2)


def test_terminal_rejects_unknown_kind():
    with pytest.raises(ValueError):
        TerminalCondition("weird", lambda p: p[:, 0, 0])


# ---------------------------------------------------------------------------
# BDSDEProblem

def test_problem_probes_driver_shapes_at_construction(linear_ode_problem):
    # a g returning the wrong width must fail here, not mid-solve
    bad_g = DriverG(fn=lambda t, y, z: np.zeros((y.shape[0], 3)),
                    c=0.1, alpha=0.5, output_dim=2)
    with pytest.raises(ValueError):
        BDSDEProblem(f=linear_ode_problem.f, g=bad_g,
                     xi=linear_ode_problem.xi,
                     grid=linear_ode_problem.grid, w_dim=1)


def test_problem_b_dim_follows_g(linear_ode_problem):
    assert linear_ode_problem.b_dim == 1
    g2 = make_g("constant", values=[0.1, 0.2])
    p = BDSDEProblem(f=linear_ode_problem.f, g=g2,
                     xi=linear_ode_problem.xi,
                     grid=linear_ode_problem.grid, w_dim=1)
    assert p.b_dim == 2


def test_with_f_and_with_xi_replace_only_one_field(linear_ode_problem):
    other = make_driver("abs")
    q = linear_ode_problem.with_f(other)
    assert q.f is other and q.g is linear_ode_problem.g
    xi2 = TerminalCondition.constant(9.0)
    r = linear_ode_problem.with_xi(xi2)
    assert r.xi is xi2 and r.f is linear_ode_problem.f


# ---------------------------------------------------------------------------
# validate_problem

def test_validation_passes_honest_constants(linear_ode_problem):
    report = validate_problem(linear_ode_problem, budget=512, seed=1)
    assert report.passed
    names = [c.name for c in report.checks]
    assert "f growth" in names and "g contraction" in names


def test_validation_catches_understated_growth():
    lying = DriverF(fn=lambda t, y, z: 10.0 * y, growth=1.0)
    p = BDSDEProblem(f=lying, g=make_g("zero"),
                     xi=TerminalCondition.constant(0.0),
                     grid=TimeGrid(1.0, 8), w_dim=1)
    report = validate_problem(p, budget=512, seed=1)
    assert not report.passed
    worst = {c.name: c for c in report.checks}["f growth"]
    assert worst.worst_ratio > 1.0
    # the witness points at an offending (t, y, z)
    assert len(worst.witness) == 3


def test_validation_catches_understated_lipschitz():
    lying = DriverF(fn=lambda t, y, z: 5.0 * y, growth=6.0, lipschitz=1.0)
    p = BDSDEProblem(f=lying, g=make_g("zero"),
                     xi=TerminalCondition.constant(0.0),
                     grid=TimeGrid(1.0, 8), w_dim=1)
    assert not validate_problem(p, budget=512, seed=1).passed


# ---------------------------------------------------------------------------
# ParamFamily / GridSolution

def test_family_domain_is_enforced(linear_ode_problem):
    fam = ParamFamily(
        build=lambda lam: (linear_ode_problem.f, linear_ode_problem.g,
                           TerminalCondition.constant(lam)),
        anchor=0.0, growth=1.0, domain=(-1.0, 1.0))
    member = fam.member(0.5, linear_ode_problem)
    assert member.xi.kind == "constant"
    with pytest.raises(ValueError):
        fam.member(2.0, linear_ode_problem)


def test_solution_shape_guards():
    grid = TimeGrid(1.0, 3)
    Y = np.zeros((2, 5, 4))
    Z = np.zeros((2, 5, 4, 1))
    sol = GridSolution(grid=grid, Y=Y, Z=Z)
    assert sol.y0 == 0.0
    with pytest.raises(ValueError):
        GridSolution(grid=grid, Y=Y[:, :, :3], Z=Z)
    with pytest.raises(ValueError):
        GridSolution(grid=grid, Y=Y, Z=Z[:, :4])
