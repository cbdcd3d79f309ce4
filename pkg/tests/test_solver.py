"""Solvers: the deterministic fast path, the regression scheme, the
bracketing machinery, and their agreement on shared ground."""

import numpy as np
import pytest

from bdsdelab import (BDSDEProblem, LatticeSpec, SchemeConfig,
                      TerminalCondition, TimeGrid, bracket_solutions,
                      deterministic_eligible, generate_paths, make_driver,
                      make_g, minimal_maximal_estimate, pooled_y0_se,
                      regress, solve_deterministic, solve_lipschitz)
from bdsdelab.solver import RegressionResult, _monomials


# ---------------------------------------------------------------------------
# SchemeConfig

def test_scheme_config_validation():
    SchemeConfig()  # defaults are valid
    with pytest.raises(ValueError):
        SchemeConfig(degree=-1)
    with pytest.raises(ValueError):
        SchemeConfig(picard=0)
    with pytest.raises(ValueError):
        SchemeConfig(workers=0)
    with pytest.raises(ValueError):
        SchemeConfig(clip=0.0)


# ---------------------------------------------------------------------------
# deterministic fast path

def test_fast_path_linear_ode(linear_ode_problem):
    assert deterministic_eligible(linear_ode_problem)
    sol = solve_deterministic(linear_ode_problem)
    assert sol.Y.shape == (1, 1, 65)
    assert abs(sol.y0 - np.e) < 1e-12
    assert sol.meta["method"] == "deterministic"


@pytest.mark.parametrize("n,tol", [(8, 1e-11), (1000, 1e-9), (10 ** 6, 1e-6)])
def test_fast_path_power_law_closed_form(n, tol):
    eps = n ** (-1.0 / 3.0)
    p = BDSDEProblem(f=make_driver("power23"), g=make_g("zero"),
                     xi=TerminalCondition.constant(1.0 / n),
                     grid=TimeGrid(1.0, 100), w_dim=1)
    sol = solve_deterministic(p)
    want = (1.0 + eps) ** 3
    assert abs(sol.y0 - want) < tol
    # the whole curve, not just the left endpoint
    t = p.grid.nodes
    np.testing.assert_allclose(sol.Y[0, 0], (1.0 - t + eps) ** 3,
                               atol=10 * tol)


def test_fast_path_rejects_random_data(noisy_problem):
    assert not deterministic_eligible(noisy_problem)
    with pytest.raises(ValueError):
        solve_deterministic(noisy_problem)


def test_fast_path_rejects_random_terminal(linear_ode_problem):
    p = linear_ode_problem.with_xi(
        TerminalCondition.of_terminal(lambda wT: wT[:, 0]))
    assert not deterministic_eligible(p)


# ---------------------------------------------------------------------------
# regression primitive

def test_regress_matches_normal_equations():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(500, 4))
    y = rng.normal(size=500)
    beta = regress(X, y).coefficients
    direct = np.linalg.solve(X.T @ X, X.T @ y)
    np.testing.assert_allclose(beta, direct, atol=1e-12)
    assert not regress(X, y).deficient


def test_regress_flags_rank_deficiency():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(200, 3))
    X = np.hstack([X, X[:, :1]])  # duplicated column
    res = regress(X, rng.normal(size=200))
    assert res.deficient
    assert res.rank == 3


def test_regress_input_guards():
    with pytest.raises(ValueError):
        regress(np.zeros(5), np.zeros(5))  # features must be a matrix
    with pytest.raises(ValueError):
        regress(np.zeros((5, 2)), np.zeros(4))
    with pytest.raises(ValueError):
        regress(np.zeros((2, 5)), np.zeros(2))  # underdetermined


def test_monomial_menu_is_graded():
    names = _monomials(1, 3)
    assert len(names) == 4  # 1, x, x^2, x^3
    assert len(_monomials(2, 2)) == 6  # 1, x, y, x^2, xy, y^2


# ---------------------------------------------------------------------------
# regression scheme against closed forms

def _ode_problem(N):
    return BDSDEProblem(f=make_driver("linear", a=1.0, b=0.0),
                        g=make_g("zero"),
                        xi=TerminalCondition.constant(1.0),
                        grid=TimeGrid(1.0, N), w_dim=1)


def test_scheme_on_ode_is_exactly_the_euler_product():
    # without noise every path is identical and the regression is exact,
    # so the scheme must reproduce (1 + dt)^N to round-off
    N = 50
    p = _ode_problem(N)
    b = generate_paths(p.grid, 1, 1, 1, 40, seed=2)
    sol = solve_lipschitz(p, b, SchemeConfig())
    assert abs(sol.y0 - (1 + 1.0 / N) ** N) < 1e-12


@pytest.mark.parametrize("picard,mult", [
    (1, lambda d: 1 + d),
    (2, lambda d: 1 + d + d ** 2),
    (3, lambda d: 1 + d + d ** 2 + d ** 3),
])
def test_picard_sweeps_append_power_terms(picard, mult):
    N = 100
    p = _ode_problem(N)
    b = generate_paths(p.grid, 1, 1, 1, 40, seed=2)
    sol = solve_lipschitz(p, b, SchemeConfig(picard=picard))
    assert abs(sol.y0 - mult(1.0 / N) ** N) < 1e-12


def test_halving_the_step_roughly_halves_the_ode_error():
    errs = {}
    for N in (50, 100):
        p = _ode_problem(N)
        b = generate_paths(p.grid, 1, 1, 1, 40, seed=2)
        errs[N] = abs(solve_lipschitz(p, b, SchemeConfig()).y0 - np.e)
    factor = errs[50] / errs[100]
    assert 1.5 <= factor <= 3.0


def test_terminal_row_is_the_terminal_datum(noisy_problem, small_bundle):
    sol = solve_lipschitz(noisy_problem, small_bundle, SchemeConfig())
    from bdsdelab import cumulate
    W, _ = cumulate(small_bundle)
    want = noisy_problem.xi(W.reshape(-1, W.shape[2], W.shape[3]))
    np.testing.assert_array_equal(sol.Y[:, :, -1].ravel(), want)
    np.testing.assert_array_equal(sol.Z[:, :, -1, :], 0.0)


def test_constant_g_growth_is_pathwise_exact():
    """With a constant g and no W dependence anywhere the backward
    recursion has a closed form per outer block."""
    c = 0.3
    for N in (50, 100):
        p = BDSDEProblem(f=make_driver("linear", a=1.0, b=0.0),
                         g=make_g("constant", values=c),
                         xi=TerminalCondition.constant(1.0),
                         grid=TimeGrid(1.0, N), w_dim=1)
        b = generate_paths(p.grid, 1, 1, 3, 30, seed=4)
        sol = solve_lipschitz(p, b, SchemeConfig())
        dt = p.grid.dt
        for k in range(3):
            y = 1.0
            for i in reversed(range(N)):
                y = y * (1 + dt) + c * b.dB[k, i, 0]
            np.testing.assert_allclose(sol.Y[k, :, 0], y, atol=1e-10)


def test_brownian_terminal_recovers_y_and_z():
    # xi = W_T with zero drift: Y_t = W_t and Z = 1
    p = BDSDEProblem(f=make_driver("constant", value=0.0), g=make_g("zero"),
                     xi=TerminalCondition.of_terminal(lambda wT: wT[:, 0]),
                     grid=TimeGrid(1.0, 20), w_dim=1)
    b = generate_paths(p.grid, 1, 1, 8, 2000, seed=11)
    sol = solve_lipschitz(p, b, SchemeConfig())
    se = pooled_y0_se(sol)
    assert abs(sol.y0) < 3 * se
    z = sol.Z[:, :, :-1, 0]
    z_outer = z.reshape(8, -1).mean(axis=1)
    z_se = z_outer.std(ddof=1) / np.sqrt(8)
    assert abs(z_outer.mean() - 1.0) < 3 * z_se


def test_workers_do_not_change_a_single_bit():
    p = BDSDEProblem(f=make_driver("abs"), g=make_g("linear_y", slopes=0.4),
                     xi=TerminalCondition.of_terminal(lambda wT: wT[:, 0]),
                     grid=TimeGrid(1.0, 40), w_dim=1)
    b = generate_paths(p.grid, 1, 1, 6, 800, seed=21)
    one = solve_lipschitz(p, b, SchemeConfig(workers=1))
    par = solve_lipschitz(p, b, SchemeConfig(workers=3))
    np.testing.assert_array_equal(one.Y, par.Y)
    np.testing.assert_array_equal(one.Z, par.Z)


def test_scheme_meta_records_the_route(noisy_problem, small_bundle):
    sol = solve_lipschitz(noisy_problem, small_bundle,
                          SchemeConfig(degree=2, picard=2))
    meta = sol.meta
    assert meta["method"] == "regression"
    assert meta["degree"] == 2 and meta["picard"] == 2
    assert meta["node0_degree"] == 0
    assert meta["bundle_fingerprint"] == small_bundle.fingerprint


def test_scheme_requires_a_lipschitz_driver(small_bundle, noisy_problem):
    p = noisy_problem.with_f(make_driver("power23"))
    with pytest.raises(ValueError, match="[Ll]ipschitz"):
        solve_lipschitz(p, small_bundle, SchemeConfig())


def test_mismatched_bundle_is_rejected(noisy_problem):
    wrong = generate_paths(TimeGrid(1.0, 39), 1, 1, 2, 10, seed=5)
    with pytest.raises(ValueError):
        solve_lipschitz(noisy_problem, wrong, SchemeConfig())


def test_pooled_se_uses_outer_replication(noisy_problem):
    b = generate_paths(noisy_problem.grid, 1, 1, 4, 200, seed=6)
    sol = solve_lipschitz(noisy_problem, b, SchemeConfig())
    per_outer = sol.Y[:, :, 0].mean(axis=1)
    want = per_outer.std(ddof=1) / 2.0
    assert pooled_y0_se(sol) == pytest.approx(want)


# ---------------------------------------------------------------------------
# bracketing

def _power_problem(N=24):
    return BDSDEProblem(f=make_driver("power23"), g=make_g("zero"),
                        xi=TerminalCondition.constant(0.0),
                        grid=TimeGrid(1.0, N), w_dim=1)


def test_bracket_orders_the_solutions_pathwise():
    p = _power_problem()
    b = generate_paths(p.grid, 1, 1, 1, 200, seed=3)
    br = bracket_solutions(p, 6.0, LatticeSpec(10.0, 0.01), b)
    assert br.width0 >= 0.0
    # same noise on both sides, so the order holds node by node
    assert np.all(br.lower.Y <= br.upper.Y + 1e-12)
    assert br.lower.y0 == pytest.approx(0.0, abs=1e-12)


def test_bracket_schedule_tightens():
    p = _power_problem()
    b = generate_paths(p.grid, 1, 1, 1, 200, seed=3)
    rep = minimal_maximal_estimate(p, [3.0, 6.0, 12.0],
                                   LatticeSpec(10.0, 0.02), b)
    ms = [r[0] for r in rep.rows]
    widths = [r[3] for r in rep.rows]
    assert ms == [3.0, 6.0, 12.0]
    assert all(a >= b_ - 1e-12 for a, b_ in zip(widths, widths[1:]))
    assert rep.lower_limit <= rep.upper_limit + 1e-9


def test_bracket_schedule_must_ascend_from_growth():
    p = _power_problem()
    b = generate_paths(p.grid, 1, 1, 1, 50, seed=3)
    with pytest.raises(ValueError):
        minimal_maximal_estimate(p, [2.0, 6.0], LatticeSpec(10.0, 0.02), b)
    with pytest.raises(ValueError):
        minimal_maximal_estimate(p, [6.0, 3.0], LatticeSpec(10.0, 0.02), b)
