"""Rendering smoke tests: every figure kind writes a real PNG."""

import numpy as np
import pytest

from bdsdelab import (ExperimentReport, LatticeSpec, SchemeConfig,
                      TerminalCondition, TimeGrid, counterexample_scenario,
                      generate_paths, minimal_maximal_estimate,
                      solve_deterministic, stability_ratio)
from bdsdelab import figures

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def _is_png(path):
    with open(path, "rb") as fh:
        return fh.read(8) == PNG_MAGIC


def test_render_solution(linear_ode_problem, tmp_path):
    sol = solve_deterministic(linear_ode_problem)
    out = str(tmp_path / "sol.png")
    assert figures.render_solution(sol, out) == out
    assert _is_png(out)


def test_render_sequence(power23_problem, tmp_path):
    b = generate_paths(power23_problem.grid, 1, 1, 1, 60, seed=1)
    rep = minimal_maximal_estimate(power23_problem, [3.0, 6.0],
                                   LatticeSpec(10.0, 0.05), b)
    out = str(tmp_path / "seq.png")
    figures.render_sequence(rep, out)
    assert _is_png(out)


def test_render_validation(tmp_path):
    rows = (("f growth", 1), ("g contraction", 0))
    out = str(tmp_path / "val.png")
    figures.render_validation(rows, out)
    assert _is_png(out)


def test_render_counterexample_report(tmp_path):
    rep = counterexample_scenario(1.0, [10, 100], steps=20)
    out = str(tmp_path / "ce.png")
    figures.render_report(rep, out)
    assert _is_png(out)


def test_render_stability_report(noisy_problem, tmp_path):
    b = generate_paths(noisy_problem.grid, 1, 1, 1, 80, seed=2)
    rep = stability_ratio(noisy_problem, [1.0, 0.1], b, SchemeConfig())
    out = str(tmp_path / "st.png")
    figures.render_report(rep, out)
    assert _is_png(out)


def test_render_report_rejects_unknown_kind(tmp_path):
    rep = ExperimentReport("mystery", ("a",), ((1.0,),), {})
    with pytest.raises(ValueError, match="mystery"):
        figures.render_report(rep, str(tmp_path / "x.png"))
