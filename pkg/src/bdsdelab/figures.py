"""Figure rendering for reports and solutions.

One PNG per report kind, written next to the delimited output.  The Agg
backend is forced so rendering works headless, and the PNG metadata is
pinned so rerendering identical data does not churn bytes through
incidental fields.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .analysis import ExperimentReport  # noqa: E402
from .core import GridSolution  # noqa: E402
from .solver import SequenceReport  # noqa: E402

__all__ = ["render_report", "render_solution", "render_sequence",
           "render_validation"]

_META = {"Software": "bdsdelab"}


def _save(fig, path: str) -> str:
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def render_solution(solution: GridSolution, path: str,
                    label: str = "Y") -> str:
    """Ensemble mean of Y over time with a min/max band across paths."""
    nodes = solution.grid.nodes
    flat = solution.Y.reshape(-1, solution.Y.shape[2])
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.fill_between(nodes, flat.min(axis=0), flat.max(axis=0),
                    alpha=0.25, label="path range")
    ax.plot(nodes, flat.mean(axis=0), lw=1.8, label=f"mean {label}")
    ax.set_xlabel("t")
    ax.set_ylabel(label)
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def render_sequence(report: SequenceReport, path: str) -> str:
    """Lower and upper Y_0 along the m-schedule."""
    ms = [r[0] for r in report.rows]
    lo = [r[1] for r in report.rows]
    up = [r[2] for r in report.rows]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(ms, lo, "o-", label="lower Y0")
    ax.plot(ms, up, "s-", label="upper Y0")
    ax.axhline(report.lower_limit, ls=":", lw=1.0)
    ax.axhline(report.upper_limit, ls=":", lw=1.0)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("m")
    ax.set_ylabel("Y0")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def render_validation(rows, path: str) -> str:
    """Pass/fail bar per validation check."""
    names = [r[0] for r in rows]
    passed = [bool(r[1]) for r in rows]
    fig, ax = plt.subplots(figsize=(6.0, 0.6 + 0.5 * len(names)))
    colors = ["#2a9d4e" if p else "#c23b39" for p in passed]
    ax.barh(range(len(names)), [1] * len(names), color=colors)
    ax.set_yticks(range(len(names)), names)
    ax.set_xticks([])
    ax.invert_yaxis()
    for i, p in enumerate(passed):
        ax.text(0.5, i, "pass" if p else "FAIL", ha="center",
                va="center", color="white")
    fig.tight_layout()
    return _save(fig, path)


def render_report(report: ExperimentReport, path: str) -> str:
    fn = _RENDERERS.get(report.kind)
    if fn is None:
        raise ValueError(f"no figure defined for report kind "
                         f"{report.kind!r}")
    return fn(report, path)


def _render_counterexample(report: ExperimentReport, path: str) -> str:
    n = report.column("n")
    to_min = report.column("dist_to_min_sq")
    to_max = report.column("dist_to_max_sq")
    t6 = report.metadata.get("limit_to_min")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.loglog(n, to_min, "o-", label="sup-sq distance to minimal")
    ax.loglog(n, to_max, "s-", label="sup-sq distance to maximal")
    if t6 is not None:
        ax.axhline(t6, ls=":", lw=1.0, color="gray", label="T^6")
    ax.set_xlabel("n")
    ax.set_ylabel("E sup |Y - Y'|^2")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def _render_cd(report: ExperimentReport, path: str) -> str:
    n = report.column("n")
    lo = report.column("dist_lower")
    up = report.column("dist_upper")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.loglog(n, np.maximum(lo, 1e-300), "o-", label="dist (lower)")
    if not np.allclose(lo, up):
        ax.loglog(n, np.maximum(up, 1e-300), "s-", label="dist (upper)")
    ax.set_xlabel("n")
    ax.set_ylabel("E sup |Y_n - Y|^2")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def _render_stability(report: ExperimentReport, path: str) -> str:
    rows = [r for r in report.rows if r[2] > 0]
    deltas = [r[0] for r in rows]
    ratios = [r[3] for r in rows]
    c = report.metadata.get("empirical_C")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.semilogx(deltas, ratios, "o-", label="dist / E|xi gap|^2")
    if c is not None and np.isfinite(c):
        ax.axhline(c, ls=":", lw=1.0, color="gray", label="empirical C")
    ax.set_xlabel("delta")
    ax.set_ylabel("ratio")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def _render_family(report: ExperimentReport, path: str) -> str:
    lam = report.column("lambda")
    dist = report.column("dist")
    rhs = report.column("rhs_eq8")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.loglog(lam, np.maximum(dist, 1e-300), "o-", label="dist")
    if np.all(np.isfinite(rhs)):
        ax.loglog(lam, np.maximum(rhs, 1e-300), "s--",
                  label="terminal + driver mismatch")
    ax.set_xlabel("lambda")
    ax.set_ylabel("E sup |Y_lam - Y_0|^2")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def _render_regcheck(report: ExperimentReport, path: str) -> str:
    # grouped scatter: one marker per (property, m), statistic vs bound
    names = sorted({r[0] for r in report.rows})
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    for k, name in enumerate(names):
        sub = [r for r in report.rows if r[0] == name]
        xs = [k + 0.12 * i for i in range(len(sub))]
        stats = [r[2] for r in sub]
        ok = all(r[4] for r in sub)
        ax.plot(xs, stats, "o" if ok else "x",
                label=f"{name} ({'ok' if ok else 'FAIL'})")
    ax.set_xticks(range(len(names)), names, rotation=20)
    ax.set_ylabel("statistic")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


_RENDERERS = {
    "counterexample": _render_counterexample,
    "cd": _render_cd,
    "stability": _render_stability,
    "family": _render_family,
    "regularize-check": _render_regcheck,
}
