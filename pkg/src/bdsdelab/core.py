"""Problem types for the 1-dimensional backward doubly stochastic equation

    Y_t = xi + int_t^T f(s, Y_s, Z_s) ds + int_t^T g(s, Y_s, Z_s) dB_s
             - int_t^T Z_s dW_s

driven by a d-dimensional W and an l-dimensional B, together with a
quasi-random audit of the standing growth and Lipschitz-type assumptions.

Drivers evaluate vectorised: ``f(t, y, z)`` takes a scalar time, ``y`` of
shape ``(n,)`` and ``z`` of shape ``(n, d)`` and returns ``(n,)``; ``g``
returns ``(n, l)``.  Scalar ``y``/``z`` inputs are accepted and give scalar
output.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "TimeGrid", "DriverF", "DriverG", "TerminalCondition", "BDSDEProblem",
    "ParamFamily", "GridSolution", "ValidationCheck", "ValidationReport",
    "DriverEvaluationError", "validate_problem",
]


class DriverEvaluationError(RuntimeError):
    """A driver failed (exception or non-finite value) at a probe point."""

    def __init__(self, message: str, point=None):
        if point is not None:
            message = f"{message} at (t, y, z) = {point}"
        super().__init__(message)
        self.point = point


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < ... < t_N = T."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not (self.horizon > 0 and np.isfinite(self.horizon)):
            raise ValueError("horizon must be a positive finite real")
        if self.steps < 1:
            raise ValueError("need at least one step")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)


def _as_points(y, z, width: Optional[int]):
    """Coerce (y, z) to ((n,), (n, d)) arrays; returns (y, z, scalar_input)."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    scalar = y.ndim == 0
    y = np.atleast_1d(y)
    if z.ndim == 0:
        z = np.full((y.shape[0], width or 1), float(z))
    elif z.ndim == 1:
        # a single 1-d vector is ambiguous; interpret against y's length
        z = z.reshape(y.shape[0], -1) if z.shape[0] == y.shape[0] and \
            (width is None or width == 1) else np.tile(z, (y.shape[0], 1))
    if z.shape[0] != y.shape[0]:
        raise ValueError(f"y has {y.shape[0]} rows but z has {z.shape[0]}")
    return y, z, scalar


@dataclass(frozen=True)
class DriverF:
    """Real-valued driver f with a declared growth constant.

    ``growth`` is the constant K in |f(t,y,z)| <= K(1+|y|+|z|), required
    positive.  ``lipschitz`` is an optional constant L for
    |f(t,y,z) - f(t,y',z')| <= L(|y-y'| + |z-z'|); leave it None for
    merely-continuous drivers.  ``modulus`` optionally certifies a uniform
    continuity modulus r -> omega(r) in the same sum metric.  ``components``
    optionally decomposes a t-independent driver as
    f(y, z) = u0(y) + u1(z1) + ... + ud(zd); the lattice regularizer uses
    it to factor its search per axis.
    """

    fn: Callable
    growth: float
    lipschitz: Optional[float] = None
    name: str = "custom"
    depends_on_z: bool = True
    depends_on_t: bool = True
    modulus: Optional[Callable] = None
    components: Optional[tuple] = None

    def __post_init__(self):
        if not (self.growth > 0 and np.isfinite(self.growth)):
            raise ValueError("growth constant K must be a positive real")
        if self.lipschitz is not None and not (
                self.lipschitz >= 0 and np.isfinite(self.lipschitz)):
            raise ValueError("lipschitz constant L must be a finite real")

    def __call__(self, t, y, z):
        y2, z2, scalar = _as_points(y, z, None)
        try:
            out = np.asarray(self.fn(float(t), y2, z2), dtype=float)
        except (ArithmeticError, ValueError) as exc:
            raise DriverEvaluationError(
                f"driver {self.name!r} failed: {exc}",
                (float(t), y2[0], z2[0])) from exc
        out = np.broadcast_to(out, y2.shape).astype(float)
        bad = ~np.isfinite(out)
        if bad.any():
            k = int(np.argmax(bad))
            raise DriverEvaluationError(
                f"driver {self.name!r} returned a non-finite value",
                (float(t), y2[k], tuple(z2[k])))
        return float(out[0]) if scalar else out


@dataclass(frozen=True)
class DriverG:
    """Vector-valued driver g for the backward dB integral.

    ``c`` and ``alpha`` are the constants of the contraction condition
    |g(t,y,z) - g(t,y',z')|^2 <= c |y-y'|^2 + alpha |z-z'|^2 with
    alpha strictly inside (0, 1).  ``fn(t, y, z)`` must return ``(n, l)``.
    """

    fn: Callable
    c: float
    alpha: float
    output_dim: int = 1
    name: str = "custom"
    depends_on_z: bool = True

    def __post_init__(self):
        if not (self.c > 0 and np.isfinite(self.c)):
            raise ValueError("c must be a positive real")
        if not (0 < self.alpha < 1):
            raise ValueError("alpha must lie strictly inside (0, 1)")
        if self.output_dim < 1:
            raise ValueError("output_dim must be at least 1")

    def __call__(self, t, y, z):
        y2, z2, scalar = _as_points(y, z, None)
        try:
            out = np.asarray(self.fn(float(t), y2, z2), dtype=float)
        except (ArithmeticError, ValueError) as exc:
            raise DriverEvaluationError(
                f"driver {self.name!r} failed: {exc}",
                (float(t), y2[0], z2[0])) from exc
        if out.ndim == 1:
            out = out[:, None]
        out = np.broadcast_to(out, (y2.shape[0], self.output_dim)).astype(float)
        bad = ~np.isfinite(out)
        if bad.any():
            k = int(np.argmax(bad.any(axis=1)))
            raise DriverEvaluationError(
                f"driver {self.name!r} returned a non-finite value",
                (float(t), y2[k], tuple(z2[k])))
        return out[0] if scalar else out


@dataclass(frozen=True)
class TerminalCondition:
    """Terminal datum xi as a functional of the forward W path.

    ``kind`` is one of ``constant`` (deterministic), ``terminal``
    (a function of W_T only), or ``path`` (a functional of the whole
    discretised W path).  ``fn`` maps paths of shape (n, N+1, d) to (n,).
    """

    kind: str
    fn: Callable
    name: str = "xi"

    _KINDS = ("constant", "terminal", "path")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"kind must be one of {self._KINDS}")

    @staticmethod
    def constant(value: float, name: Optional[str] = None) -> "TerminalCondition":
        value = float(value)
        return TerminalCondition(
            "constant", lambda paths: np.full(paths.shape[0], value),
            name or f"const({value:g})")

    @staticmethod
    def of_terminal(fn: Callable, name: str = "xi(W_T)") -> "TerminalCondition":
        """``fn`` receives W_T of shape (n, d) and returns (n,)."""
        return TerminalCondition(
            "terminal", lambda paths: np.asarray(fn(paths[:, -1, :]), dtype=float),
            name)

    @staticmethod
    def of_path(fn: Callable, name: str = "xi(W)") -> "TerminalCondition":
        return TerminalCondition("path", fn, name)

    def __call__(self, paths: np.ndarray) -> np.ndarray:
        paths = np.asarray(paths, dtype=float)
        if paths.ndim == 2:
            paths = paths[None]
        out = np.asarray(self.fn(paths), dtype=float).reshape(paths.shape[0])
        if not np.all(np.isfinite(out)):
            raise DriverEvaluationError(
                f"terminal condition {self.name!r} returned a non-finite value")
        return out

    def shifted(self, offset: float) -> "TerminalCondition":
        base = self
        return TerminalCondition(
            self.kind, lambda paths: base(paths) + offset,
            f"{self.name}+{offset:g}")

    def scaled(self, factor: float) -> "TerminalCondition":
        base = self
        return TerminalCondition(
            self.kind, lambda paths: factor * base(paths),
            f"{factor:g}*{self.name}")


@dataclass(frozen=True)
class BDSDEProblem:
    """A complete problem instance (f, g, xi) on a time grid."""

    f: DriverF
    g: DriverG
    xi: TerminalCondition
    grid: TimeGrid
    w_dim: int = 1

    def __post_init__(self):
        if self.w_dim < 1:
            raise ValueError("w_dim must be at least 1")
        # probe once so shape mistakes fail at construction, not mid-solve
        probe_y = np.zeros(2)
        probe_z = np.zeros((2, self.w_dim))
        self.f(0.0, probe_y, probe_z)
        self.g(0.0, probe_y, probe_z)

    @property
    def b_dim(self) -> int:
        return self.g.output_dim

    def with_xi(self, xi: TerminalCondition) -> "BDSDEProblem":
        return replace(self, xi=xi)

    def with_f(self, f: DriverF) -> "BDSDEProblem":
        return replace(self, f=f)


@dataclass(frozen=True)
class ParamFamily:
    """A one-parameter family lam -> (f, g, xi) with a shared growth bound.

    ``build`` returns the member triple; ``growth`` must dominate every
    member's K.  ``anchor`` is the parameter value the family converges to.
    """

    build: Callable
    anchor: float
    growth: float
    domain: tuple = (-np.inf, np.inf)
    name: str = "family"

    def member(self, lam: float, base: BDSDEProblem) -> BDSDEProblem:
        if not (self.domain[0] <= lam <= self.domain[1]):
            raise ValueError(f"parameter {lam} outside domain {self.domain}")
        f, g, xi = self.build(lam)
        return BDSDEProblem(f=f, g=g, xi=xi, grid=base.grid, w_dim=base.w_dim)


@dataclass
class GridSolution:
    """Discrete (Y, Z) indexed by (outer B-path, inner W-path, node).

    ``Y`` has shape (M_B, M_W, N+1); ``Z`` has shape (M_B, M_W, N+1, d)
    with the terminal slot fixed at zero by convention.  ``meta`` records
    the evaluation route, the regression feature menu per node, and the
    noise-bundle fingerprint used to guard comparisons.
    """

    grid: TimeGrid
    Y: np.ndarray
    Z: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.Y.ndim != 3 or self.Z.ndim != 4:
            raise ValueError("Y must be (M_B, M_W, N+1), Z (M_B, M_W, N+1, d)")
        if self.Y.shape != self.Z.shape[:3]:
            raise ValueError("Y and Z disagree on ensemble shape")
        if self.Y.shape[2] != self.grid.steps + 1:
            raise ValueError("node count does not match the grid")

    @property
    def y0(self) -> float:
        return float(self.Y[:, :, 0].mean())


@dataclass(frozen=True)
class ValidationCheck:
    name: str
    worst_ratio: float
    threshold: float
    witness: tuple
    passed: bool


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple
    budget: int
    seed: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __str__(self) -> str:
        lines = [f"validation over {self.budget} probe points (seed {self.seed})"]
        for c in self.checks:
            status = "ok  " if c.passed else "FAIL"
            lines.append(
                f"  [{status}] {c.name}: worst ratio {c.worst_ratio:.6g} "
                f"(threshold {c.threshold:g})")
        return "\n".join(lines)


def _sobol_points(n: int, dim: int, seed: int) -> np.ndarray:
    from scipy.stats import qmc

    sampler = qmc.Sobol(d=dim, scramble=True, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return sampler.random(n)


def validate_problem(
    problem: BDSDEProblem,
    budget: int = 4096,
    seed: int = 0,
    *,
    box: float = 10.0,
    tolerance: float = 1e-9,
    recenter: bool = False,
) -> ValidationReport:
    """Audit the declared driver constants on quasi-random probe points.

    Checks, in order: the growth bound on f (optionally re-centred by
    f(t,0,0)), the Lipschitz bound on f when one is declared, the
    contraction condition on g, and square integrability of xi on a small
    internal ensemble.  Probe points fill ``[0,T] x [-box, box]^{1+d}``
    from a scrambled Sobol stream, so the report is a pure function of
    (problem, budget, seed).
    """
    if budget < 2:
        raise ValueError("budget must be at least 2")
    d = problem.w_dim
    pts = _sobol_points(budget, 2 + d, seed)
    t = pts[:, 0] * problem.grid.horizon
    y = (2.0 * pts[:, 1] - 1.0) * box
    z = (2.0 * pts[:, 2:] - 1.0) * box

    checks = []

    # growth: |f| <= K (1 + |y| + |z|), Euclidean |z|
    K = problem.f.growth
    znorm = np.sqrt((z * z).sum(axis=1))
    envelope = K * (1.0 + np.abs(y) + znorm)
    fv = np.empty(budget)
    center = np.zeros(budget)
    for i in range(budget):  # per-point loop keeps the offending point exact
        fv[i] = problem.f(t[i], y[i], z[i])
        if recenter:
            center[i] = problem.f(t[i], 0.0, np.zeros(d))
    ratios = np.abs(fv - center) / envelope
    k = int(np.argmax(ratios))
    suffix = " (re-centred)" if recenter else ""
    checks.append(ValidationCheck(
        f"f growth{suffix}", float(ratios[k]), 1.0 + tolerance,
        (float(t[k]), float(y[k]), tuple(z[k])),
        bool(ratios[k] <= 1.0 + tolerance)))

    # Lipschitz on f, if declared: pair each probe point with its cyclic successor
    if problem.f.lipschitz is not None:
        L = problem.f.lipschitz
        j = np.roll(np.arange(budget), -1)
        gap = np.abs(y - y[j]) + np.abs(z - z[j]).sum(axis=1)
        keep = gap > 1e-12
        fj = np.array([problem.f(t[i], y[j[i]], z[j[i]]) for i in range(budget)])
        ratios = np.zeros(budget)
        ratios[keep] = np.abs(fv - fj)[keep] / (max(L, 1e-300) * gap[keep])
        k = int(np.argmax(ratios))
        checks.append(ValidationCheck(
            "f lipschitz", float(ratios[k]), 1.0 + tolerance,
            (float(t[k]), float(y[k]), tuple(z[k])),
            bool(ratios[k] <= 1.0 + tolerance)))

    # contraction on g: |dg|^2 <= c |dy|^2 + alpha |dz|^2
    c, alpha = problem.g.c, problem.g.alpha
    j = np.roll(np.arange(budget), -1)
    gv = np.vstack([problem.g(t[i], y[i], z[i]) for i in range(budget)])
    gj = np.vstack([problem.g(t[i], y[j[i]], z[j[i]]) for i in range(budget)])
    num = ((gv - gj) ** 2).sum(axis=1)
    den = c * (y - y[j]) ** 2 + alpha * ((z - z[j]) ** 2).sum(axis=1)
    keep = den > 1e-24
    ratios = np.zeros(budget)
    ratios[keep] = num[keep] / den[keep]
    k = int(np.argmax(ratios))
    checks.append(ValidationCheck(
        "g contraction", float(ratios[k]), 1.0 + tolerance,
        (float(t[k]), float(y[k]), tuple(z[k])),
        bool(ratios[k] <= 1.0 + tolerance)))

    # xi: finite second moment over a small internal ensemble
    n_paths = min(budget, 2048)
    rng = np.random.default_rng(seed)
    steps = problem.grid.steps
    incs = rng.standard_normal((n_paths, steps, d)) * np.sqrt(problem.grid.dt)
    paths = np.concatenate(
        [np.zeros((n_paths, 1, d)), np.cumsum(incs, axis=1)], axis=1)
    xi_vals = problem.xi(paths)
    moment = float(np.mean(xi_vals ** 2))
    checks.append(ValidationCheck(
        "xi square-integrable", moment, np.inf,
        (problem.grid.horizon, float(xi_vals[0]), ()),
        bool(np.isfinite(moment))))

    return ValidationReport(tuple(checks), budget, seed)
