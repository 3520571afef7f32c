"""Tiny expression language with exact third-order derivative jets.

Grammar (precedence from loosest to tightest)::

    expr     := term (("+" | "-") term)*
    term     := unary (("*" | "/") unary)*
    unary    := ("-" | "+") unary | power
    power    := atom ["^" exponent]
    exponent := ["-" | "+"] (number | "(" rational ")") ["^" exponent]
    rational := ["-" | "+"] number ["/" number]
    atom     := number | name | func "(" expr ")" | "(" expr ")"

Exponents must be rational constants; ``s^2^3`` is ``s^8``. Names are the
variables allowed by the caller (``s``, ``k1``, ``k2``, ``k3`` for curve
expressions) plus the constants ``pi`` and ``e``. Functions: ``sin``,
``cos``, ``exp``, ``log``, ``sqrt``.

Evaluation goes through :class:`Jet3`, a truncated Taylor jet carrying the
value and the first three derivatives with respect to ``s``. Every field may
be a float or a numpy array, so a whole grid is evaluated in one pass.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Union

import numpy as np

from .errors import (
    DomainError,
    ExpressionSyntaxError,
    MissingBinding,
    NumericalError,
    UnknownIdentifier,
)

CURVE_VARIABLES = frozenset({"s", "k1", "k2", "k3"})
CHART_VARIABLES = frozenset({"u", "v"})
SURFACE_FIELD_VARIABLES = frozenset({"u", "v", "x", "y", "z", "w"})
FUNCTIONS = frozenset({"sin", "cos", "exp", "log", "sqrt"})
CONSTANTS = {"pi": math.pi, "e": math.e}


# ---------------------------------------------------------------- AST nodes


@dataclass(frozen=True)
class Const:
    value: float
    name: str | None = None


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    num: int
    den: int = 1

    def __post_init__(self):
        if self.den < 1:
            raise ValueError("exponent denominator must be >= 1")

    @property
    def exponent(self) -> Fraction:
        return Fraction(self.num, self.den)


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Const, Var, Neg, BinOp, Pow, Call]
ExprAst = Node


def free_names(node: Node) -> set[str]:
    """Variable names referenced anywhere in ``node``."""
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Const):
        return set()
    if isinstance(node, BinOp):
        return free_names(node.left) | free_names(node.right)
    if isinstance(node, (Neg, Call)):
        return free_names(node.arg)
    return free_names(node.base)


def is_constant(node: Node) -> bool:
    return not free_names(node)


# ---------------------------------------------------------------- tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    offset: int  # byte offset


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        offset = len(text[:pos].encode("utf-8"))
        if m is None:
            raise ExpressionSyntaxError(f"unexpected character {text[pos]!r}", offset)
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, m.group(), offset))
        pos = m.end()
    tokens.append(_Token("end", "", len(text.encode("utf-8"))))
    return tokens


class _Parser:
    def __init__(self, text: str, variables: frozenset[str]):
        self.tokens = _tokenize(text)
        self.i = 0
        self.variables = variables

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def _accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def _expect(self, text: str) -> None:
        if not self._accept(text):
            found = self.tok.text or "end of input"
            raise ExpressionSyntaxError(f"expected {text!r}, found {found!r}", self.tok.offset)

    def parse(self) -> Node:
        node = self._expr()
        if self.tok.kind != "end":
            raise ExpressionSyntaxError(f"unexpected {self.tok.text!r}", self.tok.offset)
        return node

    def _expr(self) -> Node:
        node = self._term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self._term())
        return node

    def _term(self) -> Node:
        node = self._unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self._unary())
        return node

    def _unary(self) -> Node:
        if self._accept("-"):
            return Neg(self._unary())
        if self._accept("+"):
            return self._unary()
        return self._power()

    def _power(self) -> Node:
        base = self._atom()
        if self._accept("^"):
            q = self._exponent()
            return Pow(base, q.numerator, q.denominator)
        return base

    def _exponent(self) -> Fraction:
        sign = 1
        if self._accept("-"):
            sign = -1
        else:
            self._accept("+")
        if self._accept("("):
            q = self._rational()
            self._expect(")")
        else:
            q = self._number_fraction()
        q *= sign
        if self._accept("^"):
            offset = self.tok.offset
            inner = self._exponent()
            if inner.denominator != 1:
                raise ExpressionSyntaxError("iterated exponent must be an integer", offset)
            if q == 0 and inner < 0:
                raise ExpressionSyntaxError("zero raised to a negative power", offset)
            q = q ** int(inner)
        return q

    def _rational(self) -> Fraction:
        sign = 1
        if self._accept("-"):
            sign = -1
        else:
            self._accept("+")
        q = self._number_fraction()
        if self._accept("/"):
            offset = self.tok.offset
            d = self._number_fraction()
            if d == 0:
                raise ExpressionSyntaxError("zero denominator in exponent", offset)
            q = q / d
        return sign * q

    def _number_fraction(self) -> Fraction:
        if self.tok.kind != "number":
            raise ExpressionSyntaxError("exponent must be a rational constant", self.tok.offset)
        q = Fraction(self.tok.text)
        self.i += 1
        return q

    def _atom(self) -> Node:
        tok = self.tok
        if tok.kind == "number":
            self.i += 1
            return Const(float(tok.text))
        if tok.kind == "name":
            self.i += 1
            if tok.text in FUNCTIONS:
                self._expect("(")
                arg = self._expr()
                self._expect(")")
                return Call(tok.text, arg)
            if tok.text in CONSTANTS:
                return Const(CONSTANTS[tok.text], tok.text)
            if tok.text in self.variables:
                return Var(tok.text)
            raise UnknownIdentifier(tok.text, tok.offset)
        if self._accept("("):
            node = self._expr()
            self._expect(")")
            return node
        found = tok.text or "end of input"
        raise ExpressionSyntaxError(f"unexpected {found!r}", tok.offset)


def parse(text: str, variables=CURVE_VARIABLES) -> Node:
    """Parse ``text`` into an immutable expression tree.

    Raises ``ExpressionSyntaxError`` (with a byte offset) for malformed
    input and ``UnknownIdentifier`` for names outside ``variables``, the
    function names and ``pi``/``e``.
    """
    if not text or not text.strip():
        raise ExpressionSyntaxError("empty expression", 0)
    return _Parser(text, frozenset(variables)).parse()


def to_string(node: Node) -> str:
    """Fully parenthesised text that parses back to an identical tree."""
    if isinstance(node, Const):
        if node.name is not None:
            return node.name
        if node.value < 0 or not math.isfinite(node.value):
            raise ValueError("constants must be finite and non-negative to print")
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_string(node.arg)})"
    if isinstance(node, BinOp):
        return f"({to_string(node.left)} {node.op} {to_string(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({to_string(node.arg)})"
    base = to_string(node.base)
    if isinstance(node.base, Pow):
        base = f"({base})"
    if node.den == 1:
        return f"{base}^({node.num})"
    return f"{base}^({node.num}/{node.den})"


# ---------------------------------------------------------------- jets


def _check_finite(x) -> bool:
    return bool(np.all(np.isfinite(x)))


@dataclass(frozen=True)
class Jet3:
    """Value and first three derivatives of a scalar function of ``s``."""

    v0: float | np.ndarray
    v1: float | np.ndarray = 0.0
    v2: float | np.ndarray = 0.0
    v3: float | np.ndarray = 0.0

    def __post_init__(self):
        for name in ("v0", "v1", "v2", "v3"):
            if not _check_finite(getattr(self, name)):
                raise NumericalError(f"non-finite jet component {name}")

    @classmethod
    def constant(cls, value) -> "Jet3":
        return cls(value, 0.0, 0.0, 0.0)

    @classmethod
    def variable(cls, s) -> "Jet3":
        return cls(s, np.ones_like(s, dtype=float) if np.ndim(s) else 1.0, 0.0, 0.0)

    def as_tuple(self):
        return (self.v0, self.v1, self.v2, self.v3)

    def shift(self) -> "Jet3":
        """Jet of the derivative, truncated: (v1, v2, v3, 0)."""
        return Jet3(self.v1, self.v2, self.v3, 0.0)

    def scale(self, factor) -> "Jet3":
        return Jet3(self.v0 * factor, self.v1 * factor, self.v2 * factor, self.v3 * factor)

    def __add__(self, other):
        if not isinstance(other, Jet3):
            return Jet3(self.v0 + other, self.v1, self.v2, self.v3)
        return Jet3(self.v0 + other.v0, self.v1 + other.v1, self.v2 + other.v2, self.v3 + other.v3)

    __radd__ = __add__

    def __neg__(self):
        return Jet3(-self.v0, -self.v1, -self.v2, -self.v3)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet3):
            return self.scale(other)
        a, b = self, other
        return Jet3(
            a.v0 * b.v0,
            a.v1 * b.v0 + a.v0 * b.v1,
            a.v2 * b.v0 + 2 * a.v1 * b.v1 + a.v0 * b.v2,
            a.v3 * b.v0 + 3 * a.v2 * b.v1 + 3 * a.v1 * b.v2 + a.v0 * b.v3,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet3):
            return self.scale(1.0 / other)
        return self * reciprocal(other)

    def __rtruediv__(self, other):
        return reciprocal(self) * other


def compose(j: Jet3, g0, g1, g2, g3) -> Jet3:
    """Jet of ``g(j)`` given g and its derivatives evaluated at ``j.v0``."""
    a1, a2, a3 = j.v1, j.v2, j.v3
    return Jet3(
        g0,
        g1 * a1,
        g2 * a1 * a1 + g1 * a2,
        g3 * a1 ** 3 + 3 * g2 * a1 * a2 + g1 * a3,
    )


def _require_positive(x, what: str) -> None:
    if not np.all(np.asarray(x) > 0):
        raise DomainError(f"{what} of a non-positive value")


def _require_nonzero(x, what: str) -> None:
    if np.any(np.asarray(x) == 0):
        raise DomainError(f"{what} of zero")


def reciprocal(j: Jet3) -> Jet3:
    x = j.v0
    _require_nonzero(x, "division")
    r = 1.0 / x
    return compose(j, r, -r * r, 2 * r ** 3, -6 * r ** 4)


def jet_sin(j: Jet3) -> Jet3:
    s, c = np.sin(j.v0), np.cos(j.v0)
    return compose(j, s, c, -s, -c)


def jet_cos(j: Jet3) -> Jet3:
    s, c = np.sin(j.v0), np.cos(j.v0)
    return compose(j, c, -s, -c, s)


def jet_exp(j: Jet3) -> Jet3:
    e = np.exp(j.v0)
    return compose(j, e, e, e, e)


def jet_log(j: Jet3) -> Jet3:
    x = j.v0
    _require_positive(x, "log")
    r = 1.0 / x
    return compose(j, np.log(x), r, -r * r, 2 * r ** 3)


def jet_sqrt(j: Jet3) -> Jet3:
    x = j.v0
    _require_positive(x, "sqrt")
    q = np.sqrt(x)
    return compose(j, q, 0.5 / q, -0.25 / (q * x), 0.375 / (q * x * x))


def jet_pow(j: Jet3, num: int, den: int = 1) -> Jet3:
    """Jet of ``j**(num/den)``.

    Integer powers accept any base (non-zero for negative exponents);
    fractional powers demand a strictly positive base.
    """
    x = j.v0
    if den == 1:
        n = num
        if n < 0:
            _require_nonzero(x, "negative power")
        gs = []
        coef = 1.0
        for k in range(4):
            if coef == 0:
                gs.append(0.0 * x)
            else:
                gs.append(coef * np.power(np.asarray(x, dtype=float), n - k) if np.ndim(x) else coef * float(x) ** (n - k))
            coef *= n - k
        return compose(j, *gs)
    _require_positive(x, "fractional power")
    r = num / den
    xp = np.power(x, r)
    return compose(
        j,
        xp,
        r * xp / x,
        r * (r - 1) * xp / x ** 2,
        r * (r - 1) * (r - 2) * xp / x ** 3,
    )


_JET_FUNCS = {
    "sin": jet_sin,
    "cos": jet_cos,
    "exp": jet_exp,
    "log": jet_log,
    "sqrt": jet_sqrt,
}


def eval_jet(node: Node, s, curvature_jets: Mapping[str, Jet3] | None = None) -> Jet3:
    """Evaluate ``node`` and its first three ``s``-derivatives at ``s``.

    ``curvature_jets`` binds ``k1``/``k2``/``k3`` (or any other name) to the
    jets of those functions at the same points. ``s`` may be an array.
    """
    bindings = dict(curvature_jets or {})
    if "s" not in bindings:
        bindings["s"] = Jet3.variable(np.asarray(s, dtype=float) if np.ndim(s) else float(s))
    return _eval_jet(node, bindings)


def _eval_jet(node: Node, env: Mapping[str, Jet3]) -> Jet3:
    if isinstance(node, Const):
        return Jet3.constant(node.value)
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise MissingBinding(f"no binding for {node.name!r}") from None
    if isinstance(node, Neg):
        return -_eval_jet(node.arg, env)
    if isinstance(node, BinOp):
        a = _eval_jet(node.left, env)
        b = _eval_jet(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return a / b
    if isinstance(node, Call):
        return _JET_FUNCS[node.func](_eval_jet(node.arg, env))
    return jet_pow(_eval_jet(node.base, env), node.num, node.den)


def evaluate(node: Node, bindings: Mapping[str, object]):
    """Plain value of ``node`` (no derivatives); bindings may be arrays."""
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        try:
            return bindings[node.name]
        except KeyError:
            raise MissingBinding(f"no binding for {node.name!r}") from None
    if isinstance(node, Neg):
        return -evaluate(node.arg, bindings)
    if isinstance(node, BinOp):
        a = evaluate(node.left, bindings)
        b = evaluate(node.right, bindings)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        _require_nonzero(b, "division")
        return a / b
    if isinstance(node, Call):
        x = evaluate(node.arg, bindings)
        if node.func in ("log", "sqrt"):
            _require_positive(x, node.func)
        return getattr(np, node.func)(x)
    x = evaluate(node.base, bindings)
    if node.den == 1:
        if node.num < 0:
            _require_nonzero(x, "negative power")
        return np.power(np.asarray(x, dtype=float), node.num) if np.ndim(x) else float(x) ** node.num
    _require_positive(x, "fractional power")
    return np.power(x, node.num / node.den)


def validate_positive(node: Node, grid, curvature_jets: Mapping[str, Jet3] | None = None) -> bool:
    """True iff the expression value is strictly positive at every grid point."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    value = eval_jet(node, grid, curvature_jets).v0
    return bool(np.all(np.broadcast_to(value, grid.shape) > 0))
