"""Numerical laboratory for one-dimensional backward doubly stochastic
differential equations.

The package solves terminal-value problems driven forward by a Brownian
motion W and backward by an independent Brownian motion B, with drift f
and doubly-stochastic coefficient g.  Its focus is the boundary between
well-posedness and failure: Lipschitz drivers get a regression scheme
with reproducible noise, merely-continuous drivers get sandwiched
between their Lipschitz envelopes, and the experiment layer measures
how solutions respond when data converge, including the canonical case
where they refuse to.
"""

from .core import (BDSDEProblem, DriverEvaluationError, DriverF, DriverG,
                   GridSolution, ParamFamily, TerminalCondition, TimeGrid,
                   ValidationReport, validate_problem)
from .catalog import (F_CATALOG, G_CATALOG, driver_from_expression,
                      g_from_expressions, make_driver, make_g,
                      make_terminal, terminal_from_expression)
from .noise import (EnsembleTooLargeError, PathBundle, cumulate,
                    generate_paths, load_bundle, save_bundle)
from .regularize import (LatticeSpec, LatticeTooSmallError,
                         RegularizedDriver, check_lemma_properties,
                         family_regularize, lower_regularize,
                         upper_regularize)
from .solver import (BracketResult, SchemeConfig, SequenceReport,
                     bracket_solutions, deterministic_eligible,
                     minimal_maximal_estimate, pooled_y0_se, regress,
                     solve_deterministic, solve_lipschitz)
from .analysis import (ExperimentReport, continuous_dependence_experiment,
                       counterexample_scenario,
                       family_dependence_experiment, shift_family,
                       stability_ratio, sup_sq_distance, terminal_family)
from .config import ConfigError, RunConfig, load_config

__version__ = "0.1.0"

__all__ = [
    "BDSDEProblem", "DriverEvaluationError", "DriverF", "DriverG",
    "GridSolution", "ParamFamily", "TerminalCondition", "TimeGrid",
    "ValidationReport", "validate_problem",
    "F_CATALOG", "G_CATALOG", "driver_from_expression",
    "g_from_expressions", "make_driver", "make_g", "make_terminal",
    "terminal_from_expression",
    "EnsembleTooLargeError", "PathBundle", "cumulate", "generate_paths",
    "load_bundle", "save_bundle",
    "LatticeSpec", "LatticeTooSmallError", "RegularizedDriver",
    "check_lemma_properties", "family_regularize", "lower_regularize",
    "upper_regularize",
    "BracketResult", "SchemeConfig", "SequenceReport", "bracket_solutions",
    "deterministic_eligible", "minimal_maximal_estimate", "pooled_y0_se",
    "regress", "solve_deterministic", "solve_lipschitz",
    "ExperimentReport", "continuous_dependence_experiment",
    "counterexample_scenario", "family_dependence_experiment",
    "shift_family", "stability_ratio", "sup_sq_distance",
    "terminal_family",
    "ConfigError", "RunConfig", "load_config",
    "__version__",
]
