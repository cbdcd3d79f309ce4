"""Experiments layer: distances, stability ratios, the four report kinds,
and the delimited output format."""

import csv
import io
import math

import numpy as np
import pytest

from bdsdelab import (BDSDEProblem, ExperimentReport, SchemeConfig,
                      TerminalCondition, TimeGrid,
                      continuous_dependence_experiment,
                      counterexample_scenario, family_dependence_experiment,
                      generate_paths, make_driver, make_g, shift_family,
                      solve_deterministic, solve_lipschitz, stability_ratio,
                      sup_sq_distance, terminal_family)
from bdsdelab.analysis import _curve_solution


def _ode_problem(N=50):
    return BDSDEProblem(f=make_driver("linear", a=1.0, b=0.0),
                        g=make_g("zero"),
                        xi=TerminalCondition.constant(1.0),
                        grid=TimeGrid(1.0, N), w_dim=1)


# ---------------------------------------------------------------------------
# sup_sq_distance

def test_distance_identity_and_symmetry(linear_ode_problem):
    sol = solve_deterministic(linear_ode_problem)
    assert sup_sq_distance(sol, sol) == (0.0, 0.0)
    other = solve_deterministic(
        linear_ode_problem.with_xi(TerminalCondition.constant(1.5)))
    d_ab = sup_sq_distance(sol, other)
    d_ba = sup_sq_distance(other, sol)
    assert d_ab == d_ba


def test_distance_of_shifted_curves_is_the_shift_squared():
    grid = TimeGrid(1.0, 10)
    base = np.linspace(0.0, 1.0, 11)
    a = _curve_solution(grid, base)
    b = _curve_solution(grid, base + 0.25)
    est, se = sup_sq_distance(a, b)
    assert est == pytest.approx(0.0625)
    assert se == 0.0  # single path


def test_distance_guards():
    grid = TimeGrid(1.0, 4)
    a = _curve_solution(grid, np.zeros(5))
    b = _curve_solution(TimeGrid(1.0, 5), np.zeros(6))
    with pytest.raises(ValueError):
        sup_sq_distance(a, b)


def test_distance_refuses_mixed_bundles(noisy_problem):
    b1 = generate_paths(noisy_problem.grid, 1, 1, 2, 50, seed=1)
    b2 = generate_paths(noisy_problem.grid, 1, 1, 2, 50, seed=2)
    s1 = solve_lipschitz(noisy_problem, b1, SchemeConfig())
    s2 = solve_lipschitz(noisy_problem, b2, SchemeConfig())
    with pytest.raises(ValueError, match="bundle"):
        sup_sq_distance(s1, s2)


# ---------------------------------------------------------------------------
# stability

def test_stability_ratio_is_flat_and_near_the_square_growth():
    p = _ode_problem(N=100)
    b = generate_paths(p.grid, 1, 1, 1, 500, seed=7)
    rep = stability_ratio(p, [1.0, 0.1, 0.01], b)
    ratios = rep.column("ratio")
    # on the linear driver the discrete gap is exactly delta (1+dt)^(N-i),
    # so every delta gives the same ratio (1+dt)^(2N)
    want = (1.0 + 0.01) ** 200
    np.testing.assert_allclose(ratios, want, rtol=1e-10)
    assert abs(want - np.e ** 2) / np.e ** 2 < 0.02
    assert rep.metadata["empirical_C"] == pytest.approx(max(ratios))


def test_stability_scale_mode_and_zero_delta():
    p = _ode_problem(N=20)
    b = generate_paths(p.grid, 1, 1, 1, 100, seed=7)
    rep = stability_ratio(p, [0.5, 0.0], b, mode="scale")
    row = dict(zip(rep.column("delta"), rep.column("ratio")))
    assert math.isnan(row[0.0])  # undefined at delta = 0
    assert row[0.5] > 0
    with pytest.raises(ValueError):
        stability_ratio(p, [0.1], b, mode="wiggle")


# ---------------------------------------------------------------------------
# continuous dependence

def test_cd_direct_route_tracks_the_closed_form():
    N = 24
    p = _ode_problem(N=N)
    b = generate_paths(p.grid, 1, 1, 1, 100, seed=3)
    ns = [1, 2, 4, 8]
    rep = continuous_dependence_experiment(
        p, [p.xi.shifted(1.0 / n) for n in ns], b, indices=ns)
    scale = (1.0 + 1.0 / N) ** (2 * N)
    np.testing.assert_allclose(rep.column("dist_lower"),
                               [scale / n ** 2 for n in ns], rtol=1e-9)
    # Lipschitz driver: both routes coincide
    np.testing.assert_array_equal(rep.column("dist_lower"),
                                  rep.column("dist_upper"))
    assert rep.metadata["monotone_decreasing"]
    assert rep.columns == ("n", "dist_lower", "dist_upper", "se",
                           "N", "M_B", "M_W")


# ---------------------------------------------------------------------------
# counterexample

def test_counterexample_rows_match_the_closed_forms():
    rep = counterexample_scenario(1.0, [8, 1000, 10 ** 6], steps=100)
    for n, y0, d_min, d_max in rep.rows:
        eps = n ** (-1.0 / 3.0)
        assert y0 == pytest.approx((1.0 + eps) ** 3, rel=1e-6)
        assert d_min == pytest.approx(((1.0 + eps) ** 3) ** 2, rel=1e-6)
        assert d_max == pytest.approx(((1.0 + eps) ** 3 - 1.0) ** 2,
                                      rel=1e-4)
    assert rep.metadata["limit_to_min"] == 1.0
    assert rep.metadata["to_min_decreasing"]
    assert rep.metadata["to_max_decreasing"]


def test_counterexample_distance_to_minimal_never_vanishes():
    rep = counterexample_scenario(1.0, [10, 10 ** 3, 10 ** 6], steps=50)
    d_min = rep.column("dist_to_min_sq")
    assert all(d > 1.0 for d in d_min)  # stuck above T^6


def test_counterexample_rejects_bad_n():
    with pytest.raises(ValueError):
        counterexample_scenario(1.0, [0, 5])


# ---------------------------------------------------------------------------
# family dependence

def test_shift_family_ratio_is_parameter_free():
    p = _ode_problem(N=100)
    b = generate_paths(p.grid, 1, 1, 1, 50, seed=5)
    fam = shift_family(p, span=1.0)
    rep = family_dependence_experiment(fam, [1.0, 0.3, 0.1], p, b)
    lams = np.array(rep.column("lambda"))
    np.testing.assert_allclose(rep.column("rhs_eq8"), 2.0 * lams ** 2,
                               rtol=1e-12)
    ratios = np.array(rep.column("ratio"))
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-9)
    assert rep.metadata["max_ratio"] == pytest.approx(ratios.max())


def test_terminal_family_ratio_is_the_squared_growth():
    p = _ode_problem(N=200)
    b = generate_paths(p.grid, 1, 1, 1, 50, seed=5)
    fam = terminal_family(p)
    rep = family_dependence_experiment(fam, [0.5, 1.5], p, b)
    # Y(lam) = lam e^(T-t) against the zero anchor: dist/rhs = e^2
    np.testing.assert_allclose(rep.column("ratio"), np.e ** 2, rtol=1e-2)


def test_shift_family_of_eligible_problem_stays_on_the_fast_path(
        power23_problem):
    # every member is still noiseless, so no schedule is required
    b = generate_paths(power23_problem.grid, 1, 1, 1, 50, seed=5)
    fam = shift_family(power23_problem, span=1.0)
    rep = family_dependence_experiment(fam, [0.5], power23_problem, b)
    assert rep.rows[0][1] > 0


def test_non_lipschitz_family_needs_a_schedule(power23_problem):
    # a random terminal forces the scheme, and the scheme needs envelopes
    p = power23_problem.with_xi(
        TerminalCondition.of_terminal(lambda wT: wT[:, 0]))
    b = generate_paths(p.grid, 1, 1, 1, 50, seed=5)
    fam = shift_family(p, span=1.0)
    assert fam.member(0.5, p).f.lipschitz is None
    with pytest.raises(ValueError, match="m_schedule"):
        family_dependence_experiment(fam, [0.5], p, b)


# ---------------------------------------------------------------------------
# report format

def test_report_csv_round_trips_every_float(tmp_path):
    rows = ((1, 1.0 / 3.0, 7.3160178325006515),
            (10 ** 6, 2.0 ** -52, 1e300))
    rep = ExperimentReport("cd", ("n", "a", "b"), rows, {})
    path = tmp_path / "t.csv"
    rep.to_csv(str(path))
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        assert next(reader) == ["n", "a", "b"]
        for want, got in zip(rows, reader):
            assert int(got[0]) == want[0]
            assert float(got[1]) == want[1]  # exact, not approximate
            assert float(got[2]) == want[2]


def test_report_column_and_str():
    rep = ExperimentReport("cd", ("n", "x"), ((1, 0.5), (2, 0.25)), {})
    assert rep.column("x") == [0.5, 0.25]
    with pytest.raises(KeyError):
        rep.column("y")
    text = str(rep)
    assert "cd" in text and "0.25" in text
