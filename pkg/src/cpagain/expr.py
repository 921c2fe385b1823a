"""Symbolic scalar expressions over state variables x1..xn.

The grammar is deliberately small::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := ['-'] atom ['^' integer]
    atom   := number | 'x' index | func '(' expr ')' | '(' expr ')'
    func   := sin | cos | exp | tanh | sqrt | abs | sign

Trees are immutable and compare structurally. ``parse(to_string(e))``
reproduces any tree returned by ``parse``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import interval as iv

FUNCTIONS = ("sin", "cos", "exp", "tanh", "sqrt", "abs", "sign")


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprSyntaxError):
    pass


class NonIntegerExponentError(ExprSyntaxError):
    pass


class ExprDomainError(ArithmeticError):
    pass


class Expr:
    """Base node. Subclasses are frozen dataclasses."""

    def __str__(self):
        return to_string(self)

    # arithmetic sugar, with light constant folding
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __neg__(self):
        return neg(self)

    def __pow__(self, k: int):
        return power(self, k)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float


@dataclass(frozen=True, eq=True)
class Var(Expr):
    index: int  # 1-based, as written in the source text


@dataclass(frozen=True, eq=True)
class Unary(Expr):
    op: str  # "neg" or one of FUNCTIONS
    arg: Expr


@dataclass(frozen=True, eq=True)
class Binary(Expr):
    op: str  # one of + - * /
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    exponent: int


ZERO = Const(0.0)
ONE = Const(1.0)


def _wrap(x) -> Expr:
    return x if isinstance(x, Expr) else Const(float(x))


def _is_const(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


# -- folding constructors --------------------------------------------------

def add(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Binary("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Binary("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a, -1.0):
        return neg(b)
    if _is_const(b, -1.0):
        return neg(a)
    return Binary("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 0.0):
        raise ExprDomainError("division by constant zero")
    if _is_const(a, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value / b.value)
    return Binary("/", a, b)


def neg(a: Expr) -> Expr:
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def power(a: Expr, k: int) -> Expr:
    if k == 0:
        return ONE
    if k == 1:
        return a
    if _is_const(a):
        return Const(a.value ** k)
    return Pow(a, k)


def func(name: str, a: Expr) -> Expr:
    if _is_const(a):
        return Const(float(_apply_scalar(name, a.value)))
    return Unary(name, a)


def _apply_scalar(name: str, v: float) -> float:
    if name == "sqrt" and v < 0:
        raise ExprDomainError("sqrt of a negative constant")
    return float(_NUMPY_FUNCS[name](v))


# -- parsing ---------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


@dataclass
class _Token:
    kind: str
    text: str
    offset: int  # byte offset into the UTF-8 source


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {text[start]!r}",
                                  len(text[:start].encode()))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append(_Token(kind, m.group(kind), len(text[:start].encode())))
        pos = m.end()
    tokens.append(_Token("end", "", len(text.encode())))
    return tokens


class _Parser:
    def __init__(self, text: str, nvars: int | None):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.nvars = nvars

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.take()
        if tok.text != text:
            found = tok.text or "end of input"
            raise ExprSyntaxError(f"expected {text!r}, found {found!r}", tok.offset)
        return tok

    def parse(self) -> Expr:
        if self.peek().kind == "end":
            raise ExprSyntaxError("empty expression", 0)
        e = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ExprSyntaxError(f"unexpected token {tok.text!r}", tok.offset)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek().text in ("+", "-"):
            op = self.take().text
            e = Binary(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.peek().text in ("*", "/"):
            op = self.take().text
            e = Binary(op, e, self.factor())
        return e

    def factor(self) -> Expr:
        negate = False
        if self.peek().text == "-":
            self.take()
            negate = True
        e = self.atom()
        if self.peek().text == "^":
            self.take()
            tok = self.take()
            if tok.kind != "num":
                raise ExprSyntaxError("expected an integer exponent", tok.offset)
            if not tok.text.isdigit():
                raise NonIntegerExponentError(f"non-integer exponent {tok.text!r}", tok.offset)
            e = Pow(e, int(tok.text))
        return Unary("neg", e) if negate else e

    def atom(self) -> Expr:
        tok = self.take()
        if tok.kind == "num":
            return Const(float(tok.text))
        if tok.text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if tok.kind == "id":
            m = re.fullmatch(r"x([1-9]\d*)", tok.text)
            if m:
                idx = int(m.group(1))
                if self.nvars is not None and idx > self.nvars:
                    raise UnknownIdentifierError(f"variable {tok.text} exceeds state dimension {self.nvars}", tok.offset)
                return Var(idx)
            if tok.text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(tok.text, arg)
            raise UnknownIdentifierError(f"unknown identifier {tok.text!r}", tok.offset)
        found = tok.text or "end of input"
        raise ExprSyntaxError(f"unexpected {found!r}", tok.offset)


def parse(text: str, nvars: int | None = None) -> Expr:
    """Parse ``text``. With ``nvars`` set, variables beyond x<nvars> are rejected."""
    return _Parser(text, nvars).parse()


# -- printing --------------------------------------------------------------

def _fmt_const(v: float) -> str:
    if math.isfinite(v) and v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _is_atomic(e: Expr) -> bool:
    if isinstance(e, Const):
        return e.value >= 0 or math.isnan(e.value)
    return isinstance(e, Var) or (isinstance(e, Unary) and e.op != "neg")


def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return 1 if e.op in "+-" else 2
    if isinstance(e, Unary) and e.op == "neg":
        return 3
    if isinstance(e, Const) and e.value < 0:
        return 3
    if isinstance(e, Pow):
        return 4
    return 5


def to_string(e: Expr) -> str:
    if isinstance(e, Const):
        return _fmt_const(e.value)
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = to_string(e.arg)
            if _is_atomic(e.arg) or isinstance(e.arg, Pow):
                return "-" + inner
            return f"-({inner})"
        return f"{e.op}({to_string(e.arg)})"
    if isinstance(e, Pow):
        base = to_string(e.base)
        if not _is_atomic(e.base):
            base = f"({base})"
        return f"{base}^{e.exponent}"
    if isinstance(e, Binary):
        p = _prec(e)
        left = to_string(e.left)
        right = to_string(e.right)
        if _prec(e.left) < p:
            left = f"({left})"
        if _prec(e.right) <= p:
            right = f"({right})"
        if e.op in "+-":
            return f"{left} {e.op} {right}"
        return f"{left}{e.op}{right}"
    raise TypeError(f"not an expression: {e!r}")


# -- evaluation ------------------------------------------------------------

_NUMPY_FUNCS = {
    "sin": np.sin, "cos": np.cos, "exp": np.exp, "tanh": np.tanh,
    "sqrt": np.sqrt, "abs": np.abs, "sign": np.sign,
}


def evaluate(e: Expr, x) -> np.ndarray | float:
    """Evaluate at ``x``.

    ``x`` is indexed along its first axis by variable: ``x[0]`` is x1. A
    1-D input yields a float; an ``(n, N)`` input yields an array of N values.
    """
    x = np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        out = _eval(e, x)
    if x.ndim > 1:
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape[1:]).copy()
    return float(out)


def _eval(e: Expr, x):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        if e.index > x.shape[0]:
            raise UnknownIdentifierError(f"x{e.index} not provided", 0)
        return x[e.index - 1]
    if isinstance(e, Unary):
        a = _eval(e.arg, x)
        if e.op == "neg":
            return -a
        if e.op == "sqrt" and np.any(np.asarray(a) < 0):
            raise ExprDomainError("sqrt of a negative value")
        return _NUMPY_FUNCS[e.op](a)
    if isinstance(e, Pow):
        return _eval(e.base, x) ** e.exponent
    if isinstance(e, Binary):
        a = _eval(e.left, x)
        b = _eval(e.right, x)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if np.any(np.asarray(b) == 0):
            raise ExprDomainError("division by zero")
        return a / b
    raise TypeError(f"not an expression: {e!r}")


def interval_eval(e: Expr, box: Sequence[iv.Interval]) -> iv.Interval:
    """Enclosure of ``e`` over the box given as one interval per variable."""
    if isinstance(e, Const):
        return iv.Interval.point(e.value)
    if isinstance(e, Var):
        return box[e.index - 1]
    if isinstance(e, Unary):
        a = interval_eval(e.arg, box)
        if e.op == "neg":
            return -a
        if e.op == "abs":
            return iv.abs_(a)
        return getattr(iv, e.op)(a)
    if isinstance(e, Pow):
        return interval_eval(e.base, box) ** e.exponent
    if isinstance(e, Binary):
        a = interval_eval(e.left, box)
        b = interval_eval(e.right, box)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        return a / b
    raise TypeError(f"not an expression: {e!r}")


# -- differentiation -------------------------------------------------------

def differentiate(e: Expr, i: int) -> Expr:
    """Partial derivative with respect to x<i> (1-based), constant-folded."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == i else ZERO
    if isinstance(e, Unary):
        u = e.arg
        du = differentiate(u, i)
        if e.op == "neg":
            return neg(du)
        if _is_const(du, 0.0) or e.op == "sign":
            return ZERO
        if e.op == "sin":
            return mul(func("cos", u), du)
        if e.op == "cos":
            return mul(neg(func("sin", u)), du)
        if e.op == "exp":
            return mul(func("exp", u), du)
        if e.op == "tanh":
            return mul(sub(ONE, power(func("tanh", u), 2)), du)
        if e.op == "sqrt":
            return div(du, mul(Const(2.0), func("sqrt", u)))
        if e.op == "abs":
            return mul(func("sign", u), du)
    if isinstance(e, Pow):
        du = differentiate(e.base, i)
        k = e.exponent
        if k == 0 or _is_const(du, 0.0):
            return ZERO
        return mul(mul(Const(float(k)), power(e.base, k - 1)), du)
    if isinstance(e, Binary):
        a, b = e.left, e.right
        da, db = differentiate(a, i), differentiate(b, i)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, b), mul(a, db))
        return div(sub(mul(da, b), mul(a, db)), power(b, 2))
    raise TypeError(f"not an expression: {e!r}")


def variables(e: Expr) -> set[int]:
    if isinstance(e, Var):
        return {e.index}
    if isinstance(e, Unary):
        return variables(e.arg)
    if isinstance(e, Pow):
        return variables(e.base)
    if isinstance(e, Binary):
        return variables(e.left) | variables(e.right)
    return set()


def simplify(e: Expr) -> Expr:
    """Rebuild bottom-up through the folding constructors."""
    if isinstance(e, Unary):
        a = simplify(e.arg)
        return neg(a) if e.op == "neg" else func(e.op, a)
    if isinstance(e, Pow):
        return power(simplify(e.base), e.exponent)
    if isinstance(e, Binary):
        ctor = {"+": add, "-": sub, "*": mul, "/": div}[e.op]
        return ctor(simplify(e.left), simplify(e.right))
    return e
