"""Command-line front end.

Subcommands::

    bdsdelab validate         --config run.json [--seed S] [--out DIR]
    bdsdelab solve            --config run.json ...
    bdsdelab bracket          --config run.json ...
    bdsdelab experiment KIND  --config run.json ...   (cd, family,
                              counterexample, stability)
    bdsdelab regularize-check --config run.json ...

Each run leaves three kinds of files in the output directory: a
delimited table named after the command, ``run_manifest.json`` (the
config echo, the effective seed, and library versions, so a table can
be reproduced from the manifest alone), and a PNG rendering of the
table unless ``--no-figures`` is given.  ``--out`` falls back to the
``BDSDELAB_OUT`` environment variable, then to the working directory.

Exit status: 0 on success, 1 when a validation or property check
fails, 2 for usage and configuration errors.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys

import matplotlib
import numpy as np
import scipy

from . import __version__, figures
from .analysis import (ExperimentReport, continuous_dependence_experiment,
                       counterexample_scenario, family_dependence_experiment,
                       shift_family, stability_ratio, terminal_family)
from .config import ConfigError, RunConfig, load_config
from .core import validate_problem
from .noise import EnsembleTooLargeError
from .regularize import LatticeTooSmallError, check_lemma_properties
from .solver import (deterministic_eligible, minimal_maximal_estimate,
                     solve_deterministic, solve_lipschitz)

OUT_ENV = "BDSDELAB_OUT"


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH",
                        help="JSON run configuration")
    common.add_argument("--seed", type=int, default=None,
                        help="override the seed from the paths section")
    common.add_argument("--out", default=None, metavar="DIR",
                        help=f"output directory (default ${OUT_ENV} or .)")
    common.add_argument("--no-figures", action="store_true",
                        help="skip PNG rendering")

    parser = argparse.ArgumentParser(
        prog="bdsde-lab",
        description="numerical laboratory for backward doubly "
                    "stochastic equations")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common]).set_defaults(
        run=_cmd_validate)
    sub.add_parser("solve", parents=[common]).set_defaults(run=_cmd_solve)
    sub.add_parser("bracket", parents=[common]).set_defaults(
        run=_cmd_bracket)
    exp = sub.add_parser("experiment", parents=[common])
    exp.add_argument("kind",
                     choices=("cd", "family", "counterexample", "stability"))
    exp.set_defaults(run=_cmd_experiment)
    sub.add_parser("regularize-check", parents=[common]).set_defaults(
        run=_cmd_regularize_check)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 after --help
        return int(exc.code or 0)
    try:
        return args.run(args)
    except (ConfigError, EnsembleTooLargeError, LatticeTooSmallError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


# ---------------------------------------------------------------------------
# shared plumbing

def _out_dir(args) -> str:
    out = args.out or os.environ.get(OUT_ENV) or "."
    os.makedirs(out, exist_ok=True)
    return out


def _write_manifest(out: str, args, cfg: RunConfig, seed, outputs) -> str:
    manifest = {
        "command": args.command if args.command != "experiment"
        else f"experiment {args.kind}",
        "config": cfg.raw,
        "seed": seed,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "matplotlib": matplotlib.__version__,
            "bdsdelab": __version__,
        },
        "outputs": sorted(outputs),
    }
    path = os.path.join(out, "run_manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _emit(args, report: ExperimentReport, stem: str, render) -> list:
    """Write the table and (optionally) its figure; return the file names."""
    out = _out_dir(args)
    csv_path = os.path.join(out, stem + ".csv")
    report.to_csv(csv_path)
    outputs = [stem + ".csv"]
    if not args.no_figures:
        render(os.path.join(out, stem + ".png"))
        outputs.append(stem + ".png")
    return outputs


def _maybe_regularize(cfg: RunConfig):
    if cfg.has("regularize"):
        return cfg.m_schedule(), cfg.lattice()
    return None, None


# ---------------------------------------------------------------------------
# commands

def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    problem = cfg.build_problem()
    seed = cfg.seed(args.seed)
    report = validate_problem(problem, seed=seed)
    rows = tuple((c.name, int(c.passed), c.worst_ratio, c.threshold)
                 for c in report.checks)
    table = ExperimentReport(
        "validation", ("check", "passed", "worst_ratio", "threshold"),
        rows, {"budget": report.budget, "seed": report.seed})
    outputs = _emit(args, table, "validation",
                    lambda p: figures.render_validation(rows, p))
    _write_manifest(_out_dir(args), args, cfg, seed, outputs)
    print(report)
    return 0 if report.passed else 1


def _cmd_solve(args) -> int:
    cfg = load_config(args.config)
    problem = cfg.build_problem()
    seed = cfg.seed(args.seed)
    if deterministic_eligible(problem):
        sol = solve_deterministic(problem)
    else:
        bundle = cfg.build_bundle(problem, args.seed)
        sol = solve_lipschitz(problem, bundle, cfg.build_scheme())

    n_paths = sol.Y.shape[0] * sol.Y.shape[1]
    flatY = sol.Y.reshape(n_paths, -1)
    d = sol.Z.shape[3]
    flatZ = sol.Z.reshape(n_paths, -1, d)
    cols = ("node", "t", "y_mean", "y_se") + tuple(
        f"z{k + 1}_mean" for k in range(d))
    rows = []
    for i, t in enumerate(problem.grid.nodes):
        y = flatY[:, i]
        se = (float(np.std(y, ddof=1)) / np.sqrt(n_paths)
              if n_paths > 1 else 0.0)
        rows.append((i, float(t), float(y.mean()), se)
                    + tuple(float(flatZ[:, i, k].mean()) for k in range(d)))
    table = ExperimentReport("solve", cols, tuple(rows),
                             {"y0": sol.y0, **sol.meta})
    outputs = _emit(args, table, "solution",
                    lambda p: figures.render_solution(sol, p))
    _write_manifest(_out_dir(args), args, cfg, seed, outputs)
    print(f"Y0 = {sol.y0:.10g}  ({sol.meta.get('method')})")
    return 0


def _cmd_bracket(args) -> int:
    cfg = load_config(args.config)
    problem = cfg.build_problem()
    seed = cfg.seed(args.seed)
    bundle = cfg.build_bundle(problem, args.seed)
    report = minimal_maximal_estimate(
        problem, cfg.m_schedule(), cfg.lattice(), bundle,
        cfg.build_scheme(), cfg.query_radius())
    table = ExperimentReport(
        "bracket", ("m", "lower_y0", "upper_y0", "width0"), report.rows,
        {"lower_limit": report.lower_limit,
         "upper_limit": report.upper_limit, "seed": seed})
    outputs = _emit(args, table, "bracket",
                    lambda p: figures.render_sequence(report, p))
    _write_manifest(_out_dir(args), args, cfg, seed, outputs)
    print(f"minimal Y0 -> {report.lower_limit:.10g}, "
          f"maximal Y0 -> {report.upper_limit:.10g}")
    return 0


def _cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    exp = cfg.experiment()
    if exp["kind"] != args.kind:
        raise ConfigError(
            f"config experiment kind {exp['kind']!r} does not match "
            f"requested {args.kind!r}")
    pert = exp["perturbations"]

    if args.kind == "counterexample":
        seed = cfg.seed(args.seed)
        report = counterexample_scenario(
            float(exp.get("T", 1.0)), [int(n) for n in pert],
            steps=int(exp.get("N", 100)),
            substeps=int(exp.get("substeps", 10)))
    else:
        problem = cfg.build_problem()
        seed = cfg.seed(args.seed)
        bundle = cfg.build_bundle(problem, args.seed)
        scheme = cfg.build_scheme()
        if args.kind == "cd":
            ns = [int(n) for n in pert]
            xi_seq = [problem.xi.shifted(1.0 / n) for n in ns]
            m_schedule, lattice = _maybe_regularize(cfg)
            report = continuous_dependence_experiment(
                problem, xi_seq, bundle, scheme, m_schedule, lattice,
                indices=ns)
        elif args.kind == "stability":
            report = stability_ratio(problem, [float(x) for x in pert],
                                     bundle, scheme,
                                     mode=exp.get("mode", "shift"))
        else:
            name = exp.get("family", "shift")
            lams = [float(x) for x in pert]
            if name == "shift":
                span = max(1.0, max(abs(x) for x in lams))
                fam = shift_family(problem, span=span)
            elif name == "terminal":
                fam = terminal_family(problem,
                                      anchor=float(exp.get("anchor", 0.0)))
            else:
                raise ConfigError(f"unknown family {name!r}; "
                                  "expected 'shift' or 'terminal'")
            m_schedule, lattice = _maybe_regularize(cfg)
            report = family_dependence_experiment(
                fam, lams, problem, bundle, scheme, m_schedule, lattice)

    outputs = _emit(args, report, args.kind,
                    lambda p: figures.render_report(report, p))
    _write_manifest(_out_dir(args), args, cfg, seed, outputs)
    print(report)
    return 0


def _cmd_regularize_check(args) -> int:
    cfg = load_config(args.config)
    problem = cfg.build_problem()
    seed = cfg.seed(args.seed)
    lattice = cfg.lattice()
    ms = cfg.m_schedule()
    count = int(cfg.raw.get("regularize", {}).get("check_points", 512))
    rng = np.random.default_rng(seed)
    # keep probes well inside the lattice box so dominance rows are honest
    box = min(3.0, 0.3 * lattice.radius)
    points = rng.uniform(-box, box, size=(count, 1 + problem.w_dim))
    report = check_lemma_properties(problem.f, ms, points, lattice,
                                    w_dim=problem.w_dim, seed=seed)
    table = ExperimentReport(
        "regularize-check", ("property", "m", "statistic", "bound", "passed"),
        tuple(report.rows()), {"points": count, "seed": seed})
    outputs = _emit(args, table, "regularize_check",
                    lambda p: figures.render_report(table, p))
    _write_manifest(_out_dir(args), args, cfg, seed, outputs)
    print(report)
    return 0 if report.passed else 1
