"""Distance functionals and the experiment families built on them.

The measured quantity throughout is E[sup_t |Y1 - Y2|^2], estimated by
the per-path maximum over grid nodes and averaged across paths.  The
grid max is a lower bound of the continuous-time sup; refinement in N
is the control, so every report records the grid.  All comparisons
insist on common random numbers: two stochastic solutions must come
from the same bundle or the difference is mostly Monte Carlo noise.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .catalog import F_CATALOG, G_CATALOG
from .core import (BDSDEProblem, DriverF, GridSolution, ParamFamily,
                   TerminalCondition, TimeGrid)
from .noise import PathBundle, cumulate
from .regularize import LatticeSpec, lower_regularize
from .solver import (SchemeConfig, bracket_solutions, deterministic_eligible,
                     solve_deterministic, solve_lipschitz)

__all__ = [
    "ExperimentReport", "sup_sq_distance", "stability_ratio",
    "continuous_dependence_experiment", "counterexample_scenario",
    "family_dependence_experiment",
]


@dataclass
class ExperimentReport:
    """Tabulated experiment outcome.

    ``rows`` are tuples aligned with ``columns``; ``metadata`` carries
    seed, grid, scheme configuration and driver identifiers so a table
    can be traced back to its run.
    """

    kind: str
    columns: tuple
    rows: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError("row width does not match columns")

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow([_cell(v) for v in row])

    def column(self, name: str) -> list:
        if name not in self.columns:
            raise KeyError(f"no column {name!r}; have {self.columns}")
        k = self.columns.index(name)
        return [row[k] for row in self.rows]

    def __str__(self) -> str:
        lines = [f"[{self.kind}] " + ", ".join(self.columns)]
        for row in self.rows:
            lines.append("  " + ", ".join(_cell(v) for v in row))
        return "\n".join(lines)


def _cell(v) -> str:
    # 17 significant digits round-trips every 64-bit float
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def _run_metadata(bundle: Optional[PathBundle], cfg: Optional[SchemeConfig],
                  problem: Optional[BDSDEProblem]) -> dict:
    meta: dict = {}
    if bundle is not None:
        meta.update(seed=bundle.seed, outer=bundle.outer,
                    inner=bundle.inner)
    if cfg is not None:
        meta.update(degree=cfg.degree, picard=cfg.picard, clip=cfg.clip)
    if problem is not None:
        meta.update(horizon=problem.grid.horizon, steps=problem.grid.steps,
                    f=problem.f.name, g=problem.g.name, xi=problem.xi.name)
    return meta


# -- distance ----------------------------------------------------------------

def sup_sq_distance(a: GridSolution, b: GridSolution) -> tuple[float, float]:
    """Mean and standard error over paths of max_i (Y_a - Y_b)^2.

    Both solutions must share the ensemble shape, and stochastic ones
    must come from the same bundle (checked via the recorded
    fingerprint), otherwise the difference is dominated by independent
    noise rather than the functional of interest.
    """
    if a.Y.shape != b.Y.shape:
        raise ValueError("solutions have different ensemble shapes")
    fa = a.meta.get("bundle_fingerprint")
    fb = b.meta.get("bundle_fingerprint")
    if fa is not None and fb is not None and fa != fb:
        raise ValueError("solutions come from different bundles; "
                         "comparisons need common random numbers")
    gap = np.max((a.Y - b.Y) ** 2, axis=2).ravel()
    est = float(gap.mean())
    se = float(gap.std(ddof=1) / math.sqrt(gap.size)) if gap.size > 1 else 0.0
    return est, se


def _curve_solution(grid: TimeGrid, values: np.ndarray,
                    d: int = 1) -> GridSolution:
    """Wrap a deterministic curve on the grid nodes as a one-path
    solution, for distance bookkeeping."""
    Y = np.asarray(values, dtype=float)[None, None, :]
    return GridSolution(grid, Y, np.zeros(Y.shape + (d,)),
                        {"method": "curve"})


# -- stability ---------------------------------------------------------------

def stability_ratio(problem: BDSDEProblem, deltas: Sequence[float],
                    bundle: PathBundle,
                    cfg: Optional[SchemeConfig] = None,
                    mode: str = "shift") -> ExperimentReport:
    """Distance under terminal perturbations, scaled by E|xi1 - xi2|^2.

    ``mode`` is ``"shift"`` (xi + delta) or ``"scale"`` (xi times
    1 + delta).  The max finite ratio is reported as the empirical
    stability constant; delta = 0 rows carry an undefined ratio.
    """
    if mode not in ("shift", "scale"):
        raise ValueError("mode must be 'shift' or 'scale'")
    cfg = cfg or SchemeConfig()
    base = solve_lipschitz(problem, bundle, cfg)
    W, _ = cumulate(bundle)
    flatW = W.reshape(-1, W.shape[2], W.shape[3])
    xi_base = problem.xi(flatW)
    rows = []
    ratios = []
    for delta in deltas:
        delta = float(delta)
        if mode == "shift":
            xi2 = problem.xi.shifted(delta)
        else:
            xi2 = problem.xi.scaled(1.0 + delta)
        pert = solve_lipschitz(problem.with_xi(xi2), bundle, cfg)
        dist, _ = sup_sq_distance(base, pert)
        gap_sq = float(np.mean((xi2(flatW) - xi_base) ** 2))
        ratio = dist / gap_sq if gap_sq > 0 else float("nan")
        if gap_sq > 0:
            ratios.append(ratio)
        rows.append((delta, dist, gap_sq, ratio))
    meta = _run_metadata(bundle, cfg, problem)
    meta["mode"] = mode
    meta["empirical_C"] = max(ratios) if ratios else float("nan")
    return ExperimentReport("stability", ("delta", "dist", "xi_gap_sq",
                                          "ratio"), tuple(rows), meta)


# -- continuous dependence in xi ----------------------------------------------

def continuous_dependence_experiment(
        problem: BDSDEProblem,
        xi_sequence: Sequence[TerminalCondition],
        bundle: PathBundle,
        cfg: Optional[SchemeConfig] = None,
        m_schedule: Optional[Sequence[float]] = None,
        lattice: Optional[LatticeSpec] = None,
        indices: Optional[Sequence[int]] = None) -> ExperimentReport:
    """Distance to the base solution along a terminal-value sequence.

    Lipschitz drivers are solved directly and the two distance columns
    coincide.  A merely-continuous driver is replaced by its two
    envelopes at the last (tightest) level of ``m_schedule``, and the
    lower/upper distances are reported separately: uniqueness failures
    show up as the pair refusing to merge.
    """
    cfg = cfg or SchemeConfig()
    idx = list(indices) if indices is not None \
        else list(range(1, len(xi_sequence) + 1))
    if len(idx) != len(xi_sequence):
        raise ValueError("indices and xi_sequence lengths differ")

    rows = []
    if problem.f.lipschitz is not None:
        base = solve_lipschitz(problem, bundle, cfg)
        for n, xi_n in zip(idx, xi_sequence):
            sol = solve_lipschitz(problem.with_xi(xi_n), bundle, cfg)
            dist, se = sup_sq_distance(base, sol)
            rows.append((n, dist, dist, se, problem.grid.steps,
                         bundle.outer, bundle.inner))
    else:
        if m_schedule is None or lattice is None:
            raise ValueError("non-Lipschitz driver needs m_schedule and "
                             "lattice for the envelope route")
        ms = [float(m) for m in m_schedule]
        lat = lattice.refined(ms[-1] / ms[0])

        def solve_pair(p: BDSDEProblem):
            br = bracket_solutions(p, ms[-1], lat, bundle, cfg)
            return br.lower, br.upper

        base_lo, base_up = solve_pair(problem)
        for n, xi_n in zip(idx, xi_sequence):
            lo, up = solve_pair(problem.with_xi(xi_n))
            d_lo, se_lo = sup_sq_distance(base_lo, lo)
            d_up, se_up = sup_sq_distance(base_up, up)
            rows.append((n, d_lo, d_up, max(se_lo, se_up),
                         problem.grid.steps, bundle.outer, bundle.inner))

    dists = [r[1] for r in rows]
    meta = _run_metadata(bundle, cfg, problem)
    meta["monotone_decreasing"] = all(
        b <= a for a, b in zip(dists, dists[1:]))
    return ExperimentReport(
        "cd", ("n", "dist_lower", "dist_upper", "se", "N", "M_B", "M_W"),
        tuple(rows), meta)


# -- the uniqueness counterexample --------------------------------------------

def counterexample_scenario(T: float, n_values: Sequence[int],
                            steps: int = 100,
                            substeps: int = 10) -> ExperimentReport:
    """Perturbed problems f(y) = 3 y^{2/3}, xi_n = 1/n on [0, T].

    Each member is deterministic, so the fast path applies.  Distances
    are tabulated against both extreme solutions of the unperturbed
    problem: the zero curve (minimal) and (T - t)^3 (maximal).  As n
    grows the first tends to T^6 from above and the second to 0, which
    is exactly the continuous-dependence failure: the perturbed data
    converge to xi = 0 but the solutions do not converge to the minimal
    one.
    """
    if any(int(n) <= 0 for n in n_values):
        raise ValueError("n_values must be positive integers")
    grid = TimeGrid(float(T), int(steps))
    f = F_CATALOG["power23"]()
    g = G_CATALOG["zero"]()
    nodes = grid.nodes
    zero_curve = _curve_solution(grid, np.zeros(grid.steps + 1))
    max_curve = _curve_solution(grid, (T - nodes) ** 3)

    rows = []
    for n in n_values:
        n = int(n)
        prob = BDSDEProblem(f, g, TerminalCondition.constant(1.0 / n), grid)
        sol = solve_deterministic(prob, substeps=substeps)
        d_min, _ = sup_sq_distance(sol, zero_curve)
        d_max, _ = sup_sq_distance(sol, max_curve)
        rows.append((n, sol.y0, d_min, d_max))

    d_mins = [r[2] for r in rows]
    d_maxs = [r[3] for r in rows]
    meta = {
        "horizon": float(T), "steps": int(steps), "substeps": int(substeps),
        "f": f.name, "limit_to_min": float(T) ** 6, "limit_to_max": 0.0,
        # the closed form ((T + n^{-1/3})^3)^2 falls toward T^6 from above
        "to_min_decreasing": all(
            b <= a for a, b in zip(d_mins, d_mins[1:])),
        "to_max_decreasing": all(
            b <= a for a, b in zip(d_maxs, d_maxs[1:])),
    }
    return ExperimentReport(
        "counterexample", ("n", "Y0", "dist_to_min_sq", "dist_to_max_sq"),
        tuple(rows), meta)


# -- dependence on the whole (f, g, xi) triple --------------------------------

def _eq8_rhs(base: BDSDEProblem, member: BDSDEProblem,
             anchor_sol: GridSolution, bundle: PathBundle) -> float:
    """Terminal gap plus driver-mismatch integrals along the anchor
    solution: the stability bound with its constant set to 1."""
    W, _ = cumulate(bundle)
    flatW = W.reshape(-1, W.shape[2], W.shape[3])
    term = float(np.mean((member.xi(flatW) - base.xi(flatW)) ** 2))
    grid = base.grid
    nodes = grid.nodes
    mb, mw, _ = anchor_sol.Y.shape
    f_acc = 0.0
    g_acc = 0.0
    for i in range(grid.steps):
        t = float(nodes[i])
        y = anchor_sol.Y[:, :, i].ravel()
        z = anchor_sol.Z[:, :, i, :].reshape(-1, anchor_sol.Z.shape[3])
        df = member.f(t, y, z) - base.f(t, y, z)
        dg = member.g(t, y, z) - base.g(t, y, z)
        f_acc += float(np.mean(df ** 2)) * grid.dt
        g_acc += float(np.mean(np.sum(dg ** 2, axis=1))) * grid.dt
    return term + f_acc + g_acc


def family_dependence_experiment(
        family: ParamFamily, lam_values: Sequence[float],
        base: BDSDEProblem, bundle: PathBundle,
        cfg: Optional[SchemeConfig] = None,
        m_schedule: Optional[Sequence[float]] = None,
        lattice: Optional[LatticeSpec] = None) -> ExperimentReport:
    """Distance to the anchor solution along a family parameter.

    Members are routed per their own structure: deterministic members
    take the ODE fast path, Lipschitz members the regression scheme,
    anything else the lower envelope at the last schedule level (the
    minimal-solution estimate).  For Lipschitz families the terminal
    plus driver-mismatch bound is tabulated alongside, with the ratio
    distance/bound; boundedness of that ratio across the sequence is
    the stability property under test.
    """
    cfg = cfg or SchemeConfig()

    def member_for(lam: float) -> BDSDEProblem:
        return family.member(lam, base)

    anchor_prob = member_for(family.anchor)
    members = [member_for(float(lam)) for lam in lam_values]
    # one route for the whole family, or ensemble shapes would disagree
    all_fast = all(deterministic_eligible(p)
                   for p in [anchor_prob] + members)

    def route(p: BDSDEProblem) -> GridSolution:
        if all_fast:
            return solve_deterministic(p)
        if p.f.lipschitz is not None:
            return solve_lipschitz(p, bundle, cfg)
        if m_schedule is None or lattice is None:
            raise ValueError("non-Lipschitz member needs m_schedule and "
                             "lattice")
        ms = [float(m) for m in m_schedule]
        lat = lattice.refined(ms[-1] / ms[0])
        lo = lower_regularize(p.f, ms[-1], lat, w_dim=p.w_dim,
                              query_radius=1.5)
        return solve_lipschitz(p.with_f(lo.as_driver()), bundle, cfg)

    anchor_sol = route(anchor_prob)
    lipschitz_family = anchor_prob.f.lipschitz is not None

    rows = []
    ratios = []
    for lam, member in zip(lam_values, members):
        lam = float(lam)
        sol = route(member)
        dist, _ = sup_sq_distance(sol, anchor_sol)
        if lipschitz_family and member.f.lipschitz is not None:
            rhs = _eq8_rhs(anchor_prob, member, anchor_sol, bundle)
            ratio = dist / rhs if rhs > 0 else float("nan")
            if rhs > 0:
                ratios.append(ratio)
        else:
            rhs, ratio = float("nan"), float("nan")
        rows.append((lam, dist, rhs, ratio))

    meta = _run_metadata(bundle, cfg, anchor_prob)
    meta["anchor"] = family.anchor
    meta["family"] = family.name
    meta["max_ratio"] = max(ratios) if ratios else float("nan")
    return ExperimentReport(
        "family", ("lambda", "dist", "rhs_eq8", "ratio"), tuple(rows), meta)


def shift_family(problem: BDSDEProblem, span: float = 2.0) -> ParamFamily:
    """Family lam -> (f + lam, g, xi + lam), anchored at lam = 0.

    The shift leaves the Lipschitz constant alone and raises the growth
    constant by at most ``span``, which is what the family declares.
    """
    f = problem.f

    def build(lam):
        lam = float(lam)
        comps = f.components
        if comps is not None:
            head = comps[0]
            comps = ((lambda v, _u=head, _s=lam: _u(v) + _s),) + tuple(comps[1:])
        f_lam = DriverF(
            fn=lambda t, y, z, _s=lam: f(t, y, z) + _s,
            growth=f.growth + abs(lam),
            lipschitz=f.lipschitz,
            name=f"{f.name}+{lam:g}",
            depends_on_z=f.depends_on_z,
            depends_on_t=f.depends_on_t,
            modulus=f.modulus,
            components=comps)
        return f_lam, problem.g, problem.xi.shifted(lam)

    return ParamFamily(build=build, anchor=0.0, growth=f.growth + span,
                       domain=(-span, span), name=f"shift[{f.name}]")


def terminal_family(problem: BDSDEProblem, anchor: float = 0.0) -> ParamFamily:
    """Family lam -> (f, g, const(lam)): only the terminal value moves."""

    def build(lam):
        return problem.f, problem.g, TerminalCondition.constant(float(lam))

    return ParamFamily(build=build, anchor=float(anchor),
                       growth=problem.f.growth,
                       name=f"terminal[{problem.f.name}]")
