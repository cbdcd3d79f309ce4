"""Backward solution schemes.

Two routes.  Problems with a constant terminal value whose g vanishes on
the Z = 0 branch reduce to a terminal-value ODE; those are integrated
backward with classical RK4 on a refined substep.  Everything else goes
through a regression scheme: conditioning on one whole B-path at a time
turns the equation into a BSDE whose only remaining randomness is W, so
each conditional expectation is a least-squares projection onto
polynomials of the current W position, pooled across the inner W-paths
of that outer index.  The B increments are legitimately known at step i
because the solution is adapted to the future of B, not its past.

The bracketing runners wrap the stochastic scheme around the lattice
envelopes of `regularize`, always on one shared path bundle, so order
statements between runs carry Monte Carlo meaning.
"""

from __future__ import annotations

import itertools
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import BDSDEProblem, GridSolution
from .noise import PathBundle, cumulate
from .regularize import LatticeSpec, lower_regularize, upper_regularize

__all__ = [
    "SchemeConfig", "BracketResult", "SequenceReport", "RegressionResult",
    "regress", "deterministic_eligible", "solve_deterministic",
    "solve_lipschitz", "bracket_solutions", "minimal_maximal_estimate",
    "pooled_y0_se",
]


@dataclass(frozen=True)
class SchemeConfig:
    """Knobs of the stochastic scheme.

    ``degree`` is the polynomial degree of the regression basis in the
    W coordinates at each node.  ``picard`` counts evaluation sweeps per
    step: 1 keeps the drift at the right endpoint (explicit scheme),
    extra sweeps re-anchor it at the left endpoint through fixed-point
    passes.  ``clip``, when set, bounds regression targets symmetrically
    before fitting.  ``workers`` parallelises over outer B-paths.
    """

    degree: int = 3
    picard: int = 1
    clip: Optional[float] = None
    workers: int = 1

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("basis degree must be nonnegative")
        if self.picard < 1:
            raise ValueError("picard sweep count must be at least 1")
        if self.clip is not None and not (self.clip > 0):
            raise ValueError("clip bound must be positive when present")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


# -- regression ------------------------------------------------------------

RegressionResult = namedtuple("RegressionResult",
                              "coefficients rank deficient")


def _monomials(dim: int, degree: int) -> tuple:
    """Exponent tuples of all monomials with total degree <= degree,
    graded order, constant first."""
    out = []
    for total in range(degree + 1):
        for combo in itertools.combinations_with_replacement(
                range(dim), total):
            exps = [0] * dim
            for c in combo:
                exps[c] += 1
            out.append(tuple(exps))
    return tuple(out)


def _poly_features(points: np.ndarray, degree: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    n, dim = pts.shape
    cols = []
    for exps in _monomials(dim, degree):
        col = np.ones(n)
        for ax, e in enumerate(exps):
            if e:
                col = col * pts[:, ax] ** e
        cols.append(col)
    return np.column_stack(cols)


def regress(features: np.ndarray, targets: np.ndarray) -> RegressionResult:
    """Least-squares coefficients via SVD.

    Accepts one target vector or a column-stacked block of them.  Rank
    deficiency is not an error: the minimal-norm solution is returned
    with ``deficient`` set so callers can fall back or flag it.
    """
    X = np.asarray(features, dtype=float)
    T = np.asarray(targets, dtype=float)
    if X.ndim != 2:
        raise ValueError("features must be a matrix")
    if T.shape[0] != X.shape[0]:
        raise ValueError("rows(features) must equal length(targets)")
    if X.shape[0] < X.shape[1]:
        raise ValueError("underdetermined system: need rows >= columns")
    coef, _, rank, _ = np.linalg.lstsq(X, T, rcond=None)
    return RegressionResult(coef, int(rank), int(rank) < X.shape[1])


def _fit_conditional(points: np.ndarray, targets: np.ndarray,
                     degree: int) -> tuple[np.ndarray, int]:
    """Fitted values of the projection onto the largest full-rank basis
    of degree at most ``degree``."""
    for p in range(degree, -1, -1):
        X = _poly_features(points, p)
        if X.shape[0] < X.shape[1]:
            continue
        res = regress(X, targets)
        if not res.deficient:
            return X @ res.coefficients, p
    raise RuntimeError("regression basis exhausted below degree 0")


# -- deterministic fast path -------------------------------------------------

def _probe_g_vanishes(problem: BDSDEProblem) -> bool:
    # cannot check all (t, y); a deterministic probe grid has to stand in
    ts = np.linspace(0.0, problem.grid.horizon, 7)
    ys = np.linspace(-8.0, 8.0, 33)
    z0 = np.zeros((ys.shape[0], problem.w_dim))
    return all(not np.any(problem.g(float(t), ys, z0)) for t in ts)


def deterministic_eligible(problem: BDSDEProblem) -> bool:
    """True when the ODE fast path applies: constant terminal value and
    g vanishing on the Z = 0 branch (probed, not proven)."""
    return problem.xi.kind == "constant" and _probe_g_vanishes(problem)


def solve_deterministic(problem: BDSDEProblem,
                        substeps: int = 10) -> GridSolution:
    """ODE fast path for the noiseless branch.

    Needs a constant terminal value and g(t, y, 0) = 0; then Z = 0 is
    consistent and Y solves dY/dt = -f(t, Y, 0) backward from Y(T) = xi.
    Classical RK4 at substep dt/substeps.
    """
    if problem.xi.kind != "constant":
        raise ValueError(
            "fast path needs a deterministic terminal value; "
            "use the stochastic scheme")
    if not _probe_g_vanishes(problem):
        raise ValueError(
            "fast path needs g(t, y, 0) = 0; use the stochastic scheme")
    grid = problem.grid
    n_steps = grid.steps
    d = problem.w_dim
    xi_val = float(problem.xi(np.zeros((1, n_steps + 1, d)))[0])
    z0 = np.zeros((1, d))
    f = problem.f

    def phi(t: float, y: float) -> float:
        return -float(f(t, np.array([y]), z0)[0])

    nodes = grid.nodes
    h = -grid.dt / substeps
    Y = np.empty(n_steps + 1)
    Y[n_steps] = xi_val
    y = xi_val
    for i in range(n_steps - 1, -1, -1):
        t = float(nodes[i + 1])
        for _ in range(substeps):
            k1 = phi(t, y)
            k2 = phi(t + h / 2, y + h * k1 / 2)
            k3 = phi(t + h / 2, y + h * k2 / 2)
            k4 = phi(t + h, y + h * k3)
            y = y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6
            t += h
        Y[i] = y
    meta = {"method": "deterministic", "substeps": int(substeps),
            "terminal_value": xi_val}
    return GridSolution(grid, Y[None, None, :],
                        np.zeros((1, 1, n_steps + 1, d)), meta)


# -- regression scheme -------------------------------------------------------

def _check_bundle(problem: BDSDEProblem, bundle: PathBundle) -> None:
    if bundle.grid != problem.grid:
        raise ValueError("bundle grid does not match the problem grid")
    if bundle.w_dim != problem.w_dim:
        raise ValueError("bundle w_dim does not match the problem")
    if bundle.b_dim != problem.b_dim:
        raise ValueError("bundle b_dim does not match g's output width")


def _backward_pass(problem: BDSDEProblem, bundle: PathBundle,
                   Wb: np.ndarray, b: int, cfg: SchemeConfig):
    grid = problem.grid
    n_steps, dt, d = grid.steps, grid.dt, problem.w_dim
    nodes = grid.nodes
    f, g = problem.f, problem.g
    mw = bundle.inner
    dW = bundle.dW[b]
    dB = bundle.dB[b]
    Y = np.empty((mw, n_steps + 1))
    Z = np.zeros((mw, n_steps + 1, d))
    Y[:, n_steps] = problem.xi(Wb)
    fallbacks = set()
    se0 = 0.0
    y_col = 0 if cfg.picard == 1 else 1
    for i in range(n_steps - 1, -1, -1):
        t_next = float(nodes[i + 1])
        y_next = Y[:, i + 1]
        z_next = Z[:, i + 1, :]
        g_db = g(t_next, y_next, z_next) @ dB[i]
        carried = y_next + g_db
        z_tgt = carried[:, None] * dW[:, i, :] / dt
        y_tgt = carried + dt * f(t_next, y_next, z_next)
        cols = [y_tgt, carried] if cfg.picard > 1 else [y_tgt]
        targets = np.column_stack(cols + [z_tgt])
        if cfg.clip is not None:
            targets = np.clip(targets, -cfg.clip, cfg.clip)
        # W_0 is a single point, so node 0 gets the constant basis
        want = cfg.degree if i > 0 else 0
        fitted, used = _fit_conditional(Wb[:, i, :], targets, want)
        if used < want:
            fallbacks.add(i)
        Y[:, i] = fitted[:, 0]
        Z[:, i, :] = fitted[:, len(cols):]
        if cfg.picard > 1:
            yi = fitted[:, 0]
            base = fitted[:, 1]
            t_here = float(nodes[i])
            for _ in range(cfg.picard - 1):
                yi = base + dt * f(t_here, yi, Z[:, i, :])
            Y[:, i] = yi
        if i == 0:
            se0 = float(np.std(targets[:, y_col], ddof=1)
                        / np.sqrt(mw)) if mw > 1 else 0.0
    return Y, Z, se0, fallbacks


def solve_lipschitz(problem: BDSDEProblem, bundle: PathBundle,
                    cfg: Optional[SchemeConfig] = None) -> GridSolution:
    """Regression scheme over a path bundle.

    Per outer B-path: terminal values from xi on the inner W-paths, then
    backward in i with

        Z_i = (1/dt) E_i[(Y_{i+1} + g_{i+1} . dB_i) dW_i],
        Y_i = E_i[Y_{i+1} + f(t_{i+1}, Y_{i+1}, Z_{i+1}) dt
                  + g_{i+1} . dB_i],

    g at the right endpoint (backward integral convention) and E_i the
    polynomial regression on W_{t_i} over the inner paths.  A
    rank-deficient node falls back to a lower degree and is flagged in
    the metadata.  Outer paths run in parallel when ``cfg.workers`` > 1
    and are merged in index order, so results never depend on
    scheduling.
    """
    cfg = cfg or SchemeConfig()
    if problem.f.lipschitz is None:
        raise ValueError(
            "driver carries no Lipschitz constant; regularize it first")
    _check_bundle(problem, bundle)
    grid = problem.grid
    W, _ = cumulate(bundle)
    mb = bundle.outer

    def run_outer(b: int):
        return _backward_pass(problem, bundle, W[b], b, cfg)

    if cfg.workers == 1 or mb == 1:
        results = [run_outer(b) for b in range(mb)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run_outer, range(mb)))

    Y = np.empty((mb, bundle.inner, grid.steps + 1))
    Z = np.zeros((mb, bundle.inner, grid.steps + 1, problem.w_dim))
    node0_se = np.empty(mb)
    fallbacks: set = set()
    for b, (Yb, Zb, se_b, fb) in enumerate(results):
        Y[b] = Yb
        Z[b] = Zb
        node0_se[b] = se_b
        fallbacks |= fb
    meta = {
        "method": "regression",
        "degree": cfg.degree,
        "picard": cfg.picard,
        "clip": cfg.clip,
        "basis": _monomials(problem.w_dim, cfg.degree),
        "node0_degree": 0,
        "degree_fallbacks": tuple(sorted(fallbacks)),
        "rank_warning": bool(fallbacks),
        "bundle_fingerprint": bundle.fingerprint,
        "node0_se": node0_se,
        "driver": problem.f.name,
    }
    return GridSolution(grid, Y, Z, meta)


def pooled_y0_se(solution: GridSolution) -> float:
    """Standard error of ``solution.y0``.

    With several outer paths the spread of the per-outer means already
    carries the inner regression noise, including the correlation the
    backward chain threads through its fitted coefficients.  A single
    outer path falls back to the recorded node-0 fit error, which
    understates chained noise; replicate outers when the error bar is
    load-bearing.
    """
    per_outer = solution.Y[:, :, 0].mean(axis=1)
    mb = per_outer.shape[0]
    if mb > 1:
        return float(np.sqrt(per_outer.var(ddof=1) / mb))
    se = np.asarray(solution.meta.get("node0_se", [0.0]), dtype=float)
    return float(se[0])


# -- bracketing --------------------------------------------------------------

@dataclass(frozen=True)
class BracketResult:
    """Solutions under the two m-Lipschitz envelopes of one driver, on
    one shared bundle."""

    lower: GridSolution
    upper: GridSolution
    m: float
    width0: float


def bracket_solutions(problem: BDSDEProblem, m: float, lattice: LatticeSpec,
                      bundle: PathBundle,
                      cfg: Optional[SchemeConfig] = None,
                      query_radius: Optional[float] = 1.5) -> BracketResult:
    """Solve under lower and upper regularizations of f at level m.

    Common random numbers: both solves consume the identical bundle, so
    the bracket width and per-node order are low-variance statements.
    ``query_radius`` feeds the envelope truncation certificate; queries
    that wander outside that box still return valid one-sided bounds
    (node dominance is exact), they just lose the continuum-proximity
    guarantee.
    """
    lo = lower_regularize(problem.f, m, lattice, w_dim=problem.w_dim,
                          query_radius=query_radius)
    up = upper_regularize(problem.f, m, lattice, w_dim=problem.w_dim,
                          query_radius=query_radius)
    sol_lo = solve_lipschitz(problem.with_f(lo.as_driver()), bundle, cfg)
    sol_up = solve_lipschitz(problem.with_f(up.as_driver()), bundle, cfg)
    return BracketResult(sol_lo, sol_up, float(m),
                         float(sol_up.y0 - sol_lo.y0))


def _aitken(values: Sequence[float]) -> float:
    """Geometric limit from the last three terms; falls back to the last
    value when the increments fail to contract."""
    v = [float(x) for x in values]
    if len(v) < 3:
        return v[-1]
    d1 = v[-2] - v[-3]
    d2 = v[-1] - v[-2]
    if d1 == 0.0 or abs(d2) >= abs(d1):
        return v[-1]
    r = d2 / d1
    return v[-1] + d2 * r / (1.0 - r)


@dataclass(frozen=True)
class SequenceReport:
    """Y_0 of the envelope solutions along an ascending m-schedule.

    ``rows`` holds (m, lower_y0, upper_y0, width0).  The lower sequence
    should be non-decreasing and the upper non-increasing up to Monte
    Carlo noise; the increments are the Cauchy diagnostics, and the
    limits are Aitken extrapolations of the two sequences.
    """

    rows: tuple
    lower_limit: float
    upper_limit: float
    lower_increments: tuple
    upper_increments: tuple


def minimal_maximal_estimate(problem: BDSDEProblem,
                             m_schedule: Sequence[float],
                             lattice: LatticeSpec, bundle: PathBundle,
                             cfg: Optional[SchemeConfig] = None,
                             query_radius: Optional[float] = 1.5,
                             ) -> SequenceReport:
    """Bracket runs along an ascending m-schedule.

    The lattice spacing shrinks as m grows (divided by m/m_0) so the
    envelope bias stays below the scheme bias along the schedule.
    """
    ms = [float(m) for m in m_schedule]
    if any(b <= a for a, b in zip(ms, ms[1:])):
        raise ValueError("m_schedule must be strictly ascending")
    if ms[0] < problem.f.growth:
        raise ValueError("m_schedule must start at or above the growth "
                         "constant K")
    rows = []
    lows = []
    ups = []
    for m in ms:
        lat = lattice.refined(m / ms[0])
        br = bracket_solutions(problem, m, lat, bundle, cfg, query_radius)
        rows.append((m, br.lower.y0, br.upper.y0, br.width0))
        lows.append(br.lower.y0)
        ups.append(br.upper.y0)
    return SequenceReport(
        rows=tuple(rows),
        lower_limit=_aitken(lows),
        upper_limit=_aitken(ups),
        lower_increments=tuple(float(x) for x in np.diff(lows)),
        upper_increments=tuple(float(x) for x in np.diff(ups)),
    )
