"""Small arithmetic expression language for defining drivers and terminal maps.

Expressions are plain text like ``"3*cbrt(y*y)"`` or ``"exp(-t)*y + 0.5*z1"``.
Supported pieces:

* numeric literals (``2``, ``0.5``, ``1e-3``)
* variables ``t``, ``y``, ``z1`` .. ``zd``, and ``w`` (the terminal value of W)
* binary ``+ - * /``, unary ``-``
* calls ``abs, exp, log, sqrt, pow, min, max, sign, cbrt``

Precedence is unary minus, then ``* /``, then ``+ -``.  There is no infix
power operator; use ``pow(a, b)``.  ``pow`` on a negative base with a
non-integer exponent follows the even-extension convention
``pow(a, p) = pow(abs(a), p)``, so ``pow(y, 2/3)`` agrees with
``cbrt(y*y)`` on all of the real line.

``parse`` returns an immutable AST, ``render`` prints it back to canonical
text, and ``parse(render(e)) == e`` holds structurally for every AST.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

__all__ = [
    "Expr", "Num", "Var", "Neg", "Bin", "Call",
    "ParseError", "EvalError",
    "parse", "render", "evaluate", "free_variables",
]

# arity of every callable name
FUNCTIONS = {
    "abs": 1, "exp": 1, "log": 1, "sqrt": 1, "pow": 2,
    "min": 2, "max": 2, "sign": 1, "cbrt": 1,
}

_VAR_RE = re.compile(r"(t|y|w|z[1-9][0-9]*)\Z")


class ParseError(ValueError):
    """Syntax or name error, carrying the byte offset into the source."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class EvalError(ValueError):
    """Raised when evaluation hits an undefined value (0-division, log of
    a non-positive number, non-finite result, unbound variable)."""


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple["Expr", ...]


Expr = Union[Num, Var, Neg, Bin, Call]

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<punct>[-+*/(),]))"
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        match = _TOKEN_RE.match(source, pos)
        if match is None:
            if source[pos:].strip() == "":
                break
            bad = pos + len(source[pos:]) - len(source[pos:].lstrip())
            raise ParseError(f"unexpected character {source[bad]!r}", bad)
        kind = match.lastgroup
        text = match.group(kind)
        tokens.append((kind, text, match.start(kind)))
        pos = match.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.index = 0

    def peek(self):
        return self.tokens[self.index]

    def advance(self):
        token = self.tokens[self.index]
        self.index += 1
        return token

    def expect(self, text: str):
        kind, value, offset = self.peek()
        if value != text:
            raise ParseError(f"expected {text!r}", offset)
        return self.advance()

    def parse(self) -> Expr:
        expr = self.expr()
        kind, value, offset = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected trailing input {value!r}", offset)
        return expr

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.advance()[1]
            node = Bin(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.advance()[1]
            node = Bin(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.peek()[1] == "-":
            self.advance()
            # fold "-" into an adjacent literal so "-5.0" is Num(-5.0),
            # keeping negative constants round-trippable through render
            if self.peek()[0] == "num":
                return Num(-float(self.advance()[1]))
            return Neg(self.unary())
        return self.primary()

    def primary(self) -> Expr:
        kind, text, offset = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if self.peek()[1] == "(":
                if text not in FUNCTIONS:
                    raise ParseError(f"unknown function {text!r}", offset)
                self.advance()
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[text]:
                    raise ParseError(
                        f"{text} takes {FUNCTIONS[text]} argument(s), "
                        f"got {len(args)}", offset)
                return Call(text, tuple(args))
            if _VAR_RE.match(text):
                return Var(text)
            raise ParseError(f"unknown identifier {text!r}", offset)
        if text == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ParseError("expected a value", offset)


def parse(source: str) -> Expr:
    """Parse source text into an AST.  Raises ParseError with the offending
    byte offset on syntax errors, unknown names, and arity mismatches."""
    return _Parser(source).parse()


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(expr: Expr) -> int:
    if isinstance(expr, Bin):
        return _PREC[expr.op]
    if isinstance(expr, Neg):
        return 3
    return 4


def render(expr: Expr) -> str:
    """Print an AST to canonical text; parse(render(e)) == e structurally."""
    if isinstance(expr, Num):
        return repr(expr.value)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Neg):
        inner = render(expr.operand)
        # a literal operand must keep its parens or the parser would fold
        # the minus sign into it
        if _prec(expr.operand) < 3 or isinstance(expr.operand, Num):
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(expr, Bin):
        left = render(expr.left)
        if _prec(expr.left) < _PREC[expr.op]:
            left = f"({left})"
        right = render(expr.right)
        # right operand at equal precedence needs parens to keep the tree
        if _prec(expr.right) <= _PREC[expr.op]:
            right = f"({right})"
        return f"{left} {expr.op} {right}"
    if isinstance(expr, Call):
        return f"{expr.fn}({', '.join(render(a) for a in expr.args)})"
    raise TypeError(f"not an Expr: {expr!r}")


def free_variables(expr: Expr) -> frozenset[str]:
    """Names of all variables referenced by the expression."""
    if isinstance(expr, Var):
        return frozenset((expr.name,))
    if isinstance(expr, Neg):
        return free_variables(expr.operand)
    if isinstance(expr, Bin):
        return free_variables(expr.left) | free_variables(expr.right)
    if isinstance(expr, Call):
        out: frozenset[str] = frozenset()
        for arg in expr.args:
            out |= free_variables(arg)
        return out
    return frozenset()


def _even_pow(base, exponent):
    # a < 0 with integer p keeps the sign convention of real powers; a < 0
    # with fractional p uses |a|**p (even extension), never a complex branch
    base = np.asarray(base, dtype=float)
    exponent = np.asarray(exponent, dtype=float)
    is_int = exponent == np.round(exponent)
    absed = np.power(np.abs(base), exponent)
    signed = np.where(
        is_int & (np.fmod(np.round(exponent), 2.0) != 0.0),
        np.sign(base), 1.0)
    with np.errstate(all="ignore"):
        out = absed * np.where(base < 0, signed, 1.0)
    return out


def evaluate(expr: Expr, bindings: Mapping[str, "float | np.ndarray"]):
    """Evaluate an AST under the given variable bindings.

    Bindings may be scalars or numpy arrays of a common shape; the result
    broadcasts accordingly.  Division by zero and non-finite results raise
    EvalError rather than propagating inf/nan.
    """
    result = _eval(expr, bindings)
    if not np.all(np.isfinite(result)):
        raise EvalError(f"non-finite result from {render(expr)!r}")
    return result


def _eval(expr: Expr, env: Mapping[str, "float | np.ndarray"]):
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Var):
        try:
            return env[expr.name]
        except KeyError:
            raise EvalError(f"unbound variable {expr.name!r}") from None
    if isinstance(expr, Neg):
        return -np.asarray(_eval(expr.operand, env), dtype=float)
    if isinstance(expr, Bin):
        left = np.asarray(_eval(expr.left, env), dtype=float)
        right = np.asarray(_eval(expr.right, env), dtype=float)
        if expr.op == "+":
            return left + right
        if expr.op == "-":
            return left - right
        if expr.op == "*":
            return left * right
        if np.any(right == 0.0):
            raise EvalError(f"division by zero in {render(expr)!r}")
        return left / right
    if isinstance(expr, Call):
        args = [np.asarray(_eval(a, env), dtype=float) for a in expr.args]
        with np.errstate(all="ignore"):
            if expr.fn == "abs":
                return np.abs(args[0])
            if expr.fn == "exp":
                return np.exp(args[0])
            if expr.fn == "log":
                if np.any(args[0] <= 0):
                    raise EvalError("log of a non-positive number")
                return np.log(args[0])
            if expr.fn == "sqrt":
                if np.any(args[0] < 0):
                    raise EvalError("sqrt of a negative number")
                return np.sqrt(args[0])
            if expr.fn == "pow":
                return _even_pow(args[0], args[1])
            if expr.fn == "min":
                return np.minimum(args[0], args[1])
            if expr.fn == "max":
                return np.maximum(args[0], args[1])
            if expr.fn == "sign":
                return np.sign(args[0])
            if expr.fn == "cbrt":
                return np.cbrt(args[0])
    raise TypeError(f"not an Expr: {expr!r}")
