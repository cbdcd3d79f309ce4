"""Named driver catalog with certified constants, plus DSL-backed builders.

Catalog entries carry exact growth/Lipschitz constants and a continuity
modulus, so downstream consumers (validation, lattice regularization,
solvers) never have to estimate them.  Everything here is t-independent.

f entries:

* ``zero``                  f = 0
* ``constant``  {value}     f = value
* ``linear``    {a, b}      f = a*y + b
* ``abs``                   f = |y|
* ``power23``   {coef}      f = coef * (y^2)^(1/3), the non-Lipschitz example
* ``norm_growth`` {K}       f = K * (1 + |y| + |z|), growth bound attained

g entries (``make_g``): ``zero``, ``constant`` {values}, ``linear_y`` {slopes}.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from . import dsl
from .core import DriverF, DriverG, TerminalCondition

__all__ = [
    "make_driver", "make_g", "make_terminal",
    "driver_from_expression", "g_from_expressions", "terminal_from_expression",
    "F_CATALOG", "G_CATALOG",
]


def _zero_axis(x):
    return np.zeros_like(x)


def _make_zero() -> DriverF:
    return DriverF(
        fn=lambda t, y, z: np.zeros_like(y),
        growth=1.0, lipschitz=0.0, name="zero",
        depends_on_z=False, depends_on_t=False,
        modulus=lambda r: 0.0 * r,
        components=(_zero_axis,))


def _make_constant(value: float = 1.0) -> DriverF:
    value = float(value)
    return DriverF(
        fn=lambda t, y, z: np.full_like(y, value),
        growth=max(abs(value), 1.0), lipschitz=0.0,
        name=f"constant({value:g})",
        depends_on_z=False, depends_on_t=False,
        modulus=lambda r: 0.0 * r,
        components=(lambda x: np.full_like(x, value),))


def _make_linear(a: float = 1.0, b: float = 0.0) -> DriverF:
    a, b = float(a), float(b)
    return DriverF(
        fn=lambda t, y, z: a * y + b,
        growth=max(abs(a), abs(b)) or 1.0,
        lipschitz=abs(a), name=f"linear({a:g},{b:g})",
        depends_on_z=False, depends_on_t=False,
        modulus=lambda r: abs(a) * r,
        components=(lambda x: a * x + b,))


def _make_abs() -> DriverF:
    return DriverF(
        fn=lambda t, y, z: np.abs(y),
        growth=1.0, lipschitz=1.0, name="abs",
        depends_on_z=False, depends_on_t=False,
        modulus=lambda r: 1.0 * r,
        components=(np.abs,))


def _power23_axis(coef):
    return lambda x: coef * np.cbrt(x * x)


def _make_power23(coef: float = 3.0) -> DriverF:
    # |y|^(2/3) is 2/3-Hoelder with constant 1, and <= 1 + |y|, so K = coef.
    # No Lipschitz constant exists near the origin.
    coef = float(coef)
    if coef <= 0:
        raise ValueError("power23 needs a positive coefficient")
    axis = _power23_axis(coef)
    return DriverF(
        fn=lambda t, y, z: axis(y),
        growth=coef, lipschitz=None, name=f"power23({coef:g})",
        depends_on_z=False, depends_on_t=False,
        modulus=lambda r: coef * np.cbrt(np.asarray(r, dtype=float) ** 2),
        components=(axis,))


def _make_norm_growth(K: float = 1.0) -> DriverF:
    # attains the growth envelope with equality; separable only for d = 1,
    # where the Euclidean and coordinate |z| agree
    K = float(K)
    if K <= 0:
        raise ValueError("norm_growth needs a positive K")
    return DriverF(
        fn=lambda t, y, z: K * (1.0 + np.abs(y) + np.sqrt((z * z).sum(axis=1))),
        growth=K, lipschitz=K, name=f"norm_growth({K:g})",
        depends_on_z=True, depends_on_t=False,
        modulus=lambda r: K * r,
        components=(lambda x: K * (1.0 + np.abs(x)), lambda x: K * np.abs(x)))


F_CATALOG = {
    "zero": _make_zero,
    "constant": _make_constant,
    "linear": _make_linear,
    "abs": _make_abs,
    "power23": _make_power23,
    "norm_growth": _make_norm_growth,
}


def make_driver(name: str, **params) -> DriverF:
    """Build a catalog driver by name; see the module docstring for params."""
    try:
        builder = F_CATALOG[name]
    except KeyError:
        raise ValueError(
            f"unknown driver {name!r}; catalog: {sorted(F_CATALOG)}") from None
    return builder(**params)


def _make_g_zero(output_dim: int = 1) -> DriverG:
    return DriverG(
        fn=lambda t, y, z: np.zeros((y.shape[0], output_dim)),
        c=1.0, alpha=0.5, output_dim=output_dim, name="g_zero",
        depends_on_z=False)


def _make_g_constant(values: "float | Sequence[float]" = 1.0) -> DriverG:
    vec = np.atleast_1d(np.asarray(values, dtype=float))
    return DriverG(
        fn=lambda t, y, z: np.tile(vec, (y.shape[0], 1)),
        c=1.0, alpha=0.5, output_dim=vec.shape[0],
        name=f"g_const({', '.join(f'{v:g}' for v in vec)})",
        depends_on_z=False)


def _make_g_linear_y(slopes: "float | Sequence[float]" = 1.0) -> DriverG:
    vec = np.atleast_1d(np.asarray(slopes, dtype=float))
    return DriverG(
        fn=lambda t, y, z: y[:, None] * vec,
        c=float((vec * vec).sum()) or 1.0, alpha=0.5, output_dim=vec.shape[0],
        name=f"g_linear_y({', '.join(f'{v:g}' for v in vec)})",
        depends_on_z=False)


G_CATALOG = {
    "zero": _make_g_zero,
    "constant": _make_g_constant,
    "linear_y": _make_g_linear_y,
}


def make_g(name: str, **params) -> DriverG:
    try:
        builder = G_CATALOG[name]
    except KeyError:
        raise ValueError(
            f"unknown g driver {name!r}; catalog: {sorted(G_CATALOG)}") from None
    return builder(**params)


def make_terminal(kind: str, **params) -> TerminalCondition:
    """Terminal conditions: ``constant`` {value}, ``w`` (first coordinate of
    W_T), ``w_mean`` (time average of the first W coordinate), or
    ``expr`` {source} for a DSL map of w."""
    if kind == "constant":
        return TerminalCondition.constant(params.get("value", 0.0))
    if kind == "w":
        return TerminalCondition.of_terminal(lambda wT: wT[:, 0], name="W_T")
    if kind == "w_mean":
        return TerminalCondition.of_path(
            lambda paths: paths[:, :, 0].mean(axis=1), name="mean(W)")
    if kind == "expr":
        return terminal_from_expression(params["source"])
    raise ValueError(f"unknown terminal condition kind {kind!r}")


def _expr_vars(d: int, allow: Sequence[str]) -> frozenset:
    names = set(allow)
    names.update(f"z{k}" for k in range(1, d + 1))
    return frozenset(names)


def driver_from_expression(
    source: str,
    growth: float,
    lipschitz: Optional[float] = None,
    *,
    w_dim: int = 1,
    name: Optional[str] = None,
) -> DriverF:
    """Compile a DSL expression in (t, y, z1..zd) into a DriverF.

    The growth constant is declared by the caller and audited separately
    by ``validate_problem``; it is not inferred from the expression.
    """
    expr = dsl.parse(source)
    used = dsl.free_variables(expr)
    allowed = _expr_vars(w_dim, ("t", "y"))
    stray = used - allowed
    if stray:
        raise ValueError(f"driver expression uses {sorted(stray)}; "
                         f"allowed variables are {sorted(allowed)}")

    def fn(t, y, z):
        env = {"t": t, "y": y}
        env.update({f"z{k + 1}": z[:, k] for k in range(z.shape[1])})
        return np.broadcast_to(dsl.evaluate(expr, env), y.shape)

    z_used = any(v.startswith("z") for v in used)
    components = None
    if not z_used and "t" not in used:
        components = (lambda x: np.broadcast_to(
            np.asarray(dsl.evaluate(expr, {"y": x}), dtype=float), x.shape),)
    return DriverF(
        fn=fn, growth=growth, lipschitz=lipschitz,
        name=name or f"expr({source})",
        depends_on_z=z_used, depends_on_t="t" in used,
        components=components)


def g_from_expressions(
    sources: Sequence[str],
    c: float,
    alpha: float,
    *,
    w_dim: int = 1,
    name: Optional[str] = None,
) -> DriverG:
    """Compile one DSL expression per output coordinate into a DriverG."""
    exprs = [dsl.parse(s) for s in sources]
    allowed = _expr_vars(w_dim, ("t", "y"))
    z_used = False
    for src, expr in zip(sources, exprs):
        stray = dsl.free_variables(expr) - allowed
        if stray:
            raise ValueError(f"g expression {src!r} uses {sorted(stray)}")
        z_used = z_used or any(
            v.startswith("z") for v in dsl.free_variables(expr))

    def fn(t, y, z):
        env = {"t": t, "y": y}
        env.update({f"z{k + 1}": z[:, k] for k in range(z.shape[1])})
        cols = [np.broadcast_to(dsl.evaluate(e, env), y.shape) for e in exprs]
        return np.stack(cols, axis=1)

    return DriverG(
        fn=fn, c=c, alpha=alpha, output_dim=len(exprs),
        name=name or f"g_expr({'; '.join(sources)})", depends_on_z=z_used)


def terminal_from_expression(source: str) -> TerminalCondition:
    """Compile a DSL expression of ``w`` (the first coordinate of W_T)."""
    expr = dsl.parse(source)
    stray = dsl.free_variables(expr) - {"w"}
    if stray:
        raise ValueError(
            f"terminal expression may only use 'w', found {sorted(stray)}")

    def fn(wT):
        return np.broadcast_to(
            np.asarray(dsl.evaluate(expr, {"w": wT[:, 0]}), dtype=float),
            (wT.shape[0],))

    return TerminalCondition.of_terminal(fn, name=f"xi({source})")
