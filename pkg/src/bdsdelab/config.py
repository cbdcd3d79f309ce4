"""JSON run configurations for the command-line front end.

A config file is a single JSON object with up to five sections::

    {
      "problem": {
        "T": 1.0, "N": 100, "d": 1,
        "f":  {"catalog": "power23", "params": {"coef": 3.0}}
              or {"expr": "3 * pow(y, 2/3)", "growth": 3.0,
                  "lipschitz": null},
        "g":  {"catalog": "linear_y", "params": {"slopes": [0.2]}}
              or {"exprs": ["0.2 * y"], "c": 0.04, "alpha": 0.5},
        "xi": {"kind": "constant", "value": 0.0}
              or {"kind": "w"} | {"kind": "w_mean"}
              or {"kind": "expr", "source": "w * w"}
      },
      "paths":      {"outer": 8, "inner": 4000, "seed": 7},
      "scheme":     {"degree": 3, "picard": 1, "clip": null, "workers": 1},
      "regularize": {"m_schedule": [3, 6, 12, 24],
                     "radius": 10.0, "spacing": 0.01,
                     "query_radius": 1.5},
      "experiment": {"kind": "cd", "perturbations": [1, 2, 4, 8],
                     "mode": "shift", "family": "shift",
                     "T": 1.0, "N": 100, "substeps": 10}
    }

Sections are independent and a command pulls only what it needs, so a
counterexample run (whose problem data are pinned by construction) works
with just an ``experiment`` section.  Loading is eager for JSON syntax
and unknown top-level keys, lazy for everything else: each accessor
builds its objects on demand and re-raises constructor complaints as
``ConfigError`` tagged with the section that caused them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .catalog import (driver_from_expression, g_from_expressions,
                      make_driver, make_g, make_terminal,
                      terminal_from_expression)
from .core import BDSDEProblem, DriverF, DriverG, TerminalCondition, TimeGrid
from .noise import PathBundle, generate_paths
from .regularize import LatticeSpec
from .solver import SchemeConfig

_SECTIONS = ("problem", "paths", "scheme", "regularize", "experiment")
_EXPERIMENT_KINDS = ("cd", "family", "counterexample", "stability")


class ConfigError(ValueError):
    """A config file that cannot be turned into runnable objects."""


def _fail(section: str, message: str) -> "ConfigError":
    return ConfigError(f"[{section}] {message}")


def _mapping(section: str, obj) -> dict:
    if not isinstance(obj, dict):
        raise _fail(section, f"expected a JSON object, got {type(obj).__name__}")
    return obj


def _build_f(spec: dict, w_dim: int) -> DriverF:
    if "catalog" in spec:
        name = spec["catalog"]
        params = _mapping("problem.f.params", spec.get("params", {}))
        try:
            return make_driver(name, **params)
        except (KeyError, TypeError, ValueError) as exc:
            raise _fail("problem.f", str(exc)) from exc
    if "expr" in spec:
        if "growth" not in spec:
            raise _fail("problem.f", "an expression driver needs 'growth'")
        try:
            return driver_from_expression(
                spec["expr"], growth=float(spec["growth"]),
                lipschitz=spec.get("lipschitz"), w_dim=w_dim)
        except (SyntaxError, TypeError, ValueError) as exc:
            raise _fail("problem.f", str(exc)) from exc
    raise _fail("problem.f", "give either 'catalog' or 'expr'")


def _build_g(spec: dict, w_dim: int) -> DriverG:
    if "catalog" in spec:
        params = _mapping("problem.g.params", spec.get("params", {}))
        try:
            return make_g(spec["catalog"], **params)
        except (KeyError, TypeError, ValueError) as exc:
            raise _fail("problem.g", str(exc)) from exc
    if "exprs" in spec:
        for key in ("c", "alpha"):
            if key not in spec:
                raise _fail("problem.g", f"expression g needs '{key}'")
        try:
            return g_from_expressions(
                list(spec["exprs"]), c=float(spec["c"]),
                alpha=float(spec["alpha"]), w_dim=w_dim)
        except (SyntaxError, TypeError, ValueError) as exc:
            raise _fail("problem.g", str(exc)) from exc
    raise _fail("problem.g", "give either 'catalog' or 'exprs'")


def _build_xi(spec: dict) -> TerminalCondition:
    kind = spec.get("kind")
    if kind is None:
        raise _fail("problem.xi", "missing 'kind'")
    params = {k: v for k, v in spec.items() if k != "kind"}
    try:
        if kind == "expr":
            return terminal_from_expression(params.pop("source"))
        return make_terminal(kind, **params)
    except (KeyError, SyntaxError, TypeError, ValueError) as exc:
        raise _fail("problem.xi", str(exc)) from exc


@dataclass(frozen=True)
class RunConfig:
    """Parsed config with lazy section accessors."""

    raw: dict
    path: str = "<memory>"

    def _section(self, name: str, required: bool = True) -> dict:
        sec = self.raw.get(name)
        if sec is None:
            if required:
                raise _fail(name, "section is required for this command")
            return {}
        return _mapping(name, sec)

    def has(self, name: str) -> bool:
        return name in self.raw

    # problem ---------------------------------------------------------

    def build_problem(self) -> BDSDEProblem:
        sec = self._section("problem")
        for key in ("T", "N", "f", "g", "xi"):
            if key not in sec:
                raise _fail("problem", f"missing '{key}'")
        w_dim = int(sec.get("d", 1))
        try:
            grid = TimeGrid(float(sec["T"]), int(sec["N"]))
        except (TypeError, ValueError) as exc:
            raise _fail("problem", str(exc)) from exc
        f = _build_f(_mapping("problem.f", sec["f"]), w_dim)
        g = _build_g(_mapping("problem.g", sec["g"]), w_dim)
        xi = _build_xi(_mapping("problem.xi", sec["xi"]))
        try:
            return BDSDEProblem(f=f, g=g, xi=xi, grid=grid, w_dim=w_dim)
        except (TypeError, ValueError) as exc:
            raise _fail("problem", str(exc)) from exc

    # paths -----------------------------------------------------------

    def seed(self, override=None) -> int:
        if override is not None:
            return int(override)
        return int(self._section("paths", required=False).get("seed", 0))

    def build_bundle(self, problem: BDSDEProblem, seed=None) -> PathBundle:
        sec = self._section("paths")
        for key in ("outer", "inner"):
            if key not in sec:
                raise _fail("paths", f"missing '{key}'")
        try:
            return generate_paths(
                problem.grid, problem.w_dim, problem.b_dim,
                int(sec["outer"]), int(sec["inner"]), self.seed(seed))
        except (TypeError, ValueError) as exc:
            raise _fail("paths", str(exc)) from exc

    # scheme ----------------------------------------------------------

    def build_scheme(self) -> SchemeConfig:
        sec = self._section("scheme", required=False)
        known = {"degree", "picard", "clip", "workers"}
        extra = set(sec) - known
        if extra:
            raise _fail("scheme", f"unknown keys {sorted(extra)}")
        try:
            return SchemeConfig(
                degree=int(sec.get("degree", 3)),
                picard=int(sec.get("picard", 1)),
                clip=(None if sec.get("clip") is None
                      else float(sec["clip"])),
                workers=int(sec.get("workers", 1)))
        except (TypeError, ValueError) as exc:
            raise _fail("scheme", str(exc)) from exc

    # regularize ------------------------------------------------------

    def lattice(self) -> LatticeSpec:
        sec = self._section("regularize")
        try:
            return LatticeSpec(float(sec.get("radius", 10.0)),
                               float(sec.get("spacing", 0.01)))
        except (TypeError, ValueError) as exc:
            raise _fail("regularize", str(exc)) from exc

    def m_schedule(self) -> tuple:
        sec = self._section("regularize")
        if "m_schedule" not in sec:
            raise _fail("regularize", "missing 'm_schedule'")
        ms = tuple(float(m) for m in sec["m_schedule"])
        if not ms or any(b <= a for a, b in zip(ms, ms[1:])):
            raise _fail("regularize",
                        "m_schedule must be non-empty and increasing")
        return ms

    def query_radius(self):
        sec = self._section("regularize", required=False)
        qr = sec.get("query_radius", 1.5)
        return None if qr is None else float(qr)

    # experiment ------------------------------------------------------

    def experiment(self) -> dict:
        sec = self._section("experiment")
        kind = sec.get("kind")
        if kind not in _EXPERIMENT_KINDS:
            raise _fail("experiment",
                        f"kind must be one of {_EXPERIMENT_KINDS}, "
                        f"got {kind!r}")
        if "perturbations" not in sec:
            raise _fail("experiment", "missing 'perturbations'")
        pert = list(sec["perturbations"])
        if not pert:
            raise _fail("experiment", "'perturbations' is empty")
        return dict(sec, perturbations=pert)


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc
    raw = _mapping("top level", raw)
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown top-level sections {sorted(unknown)}; "
                          f"expected a subset of {_SECTIONS}")
    return RunConfig(raw=raw, path=path)
