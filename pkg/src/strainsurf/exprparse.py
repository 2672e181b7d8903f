"""Component-wise analytic field expressions with forward-mode derivatives.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right associative
    atom   := NUMBER | VAR | FUNC '(' expr ')' | '(' expr ')'

Variables are ``x``, ``y``, ``z``; functions are ``sin``, ``cos``, ``exp``
and ``sqrt``.  Evaluation works on scalars or numpy arrays and carries a
3-wide gradient alongside the value, so Jacobians of parsed fields are exact.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

VARIABLES = ("x", "y", "z")
FUNCTIONS = ("sin", "cos", "exp", "sqrt")


class ExprSyntaxError(SyntaxError):
    """Malformed expression text; ``offset`` is the 0-based byte offset."""

    def __init__(self, message: str, text: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.text = text
        self.offset = offset


class UnknownIdentifier(ExprSyntaxError):
    pass


class EvalDomainError(ArithmeticError):
    """Division by zero, square root of a negative number and similar."""


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
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Neg, BinOp, Call]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", text, _byte_offset(text, pos))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


def _byte_offset(text: str, char_pos: int) -> int:
    return len(text[:char_pos].encode("utf-8"))


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok, cls=ExprSyntaxError):
        return cls(message, self.text, _byte_offset(self.text, tok[2]))

    def expect(self, value):
        tok = self.advance()
        if tok[1] != value:
            got = tok[1] or "end of input"
            raise self.error(f"expected {value!r}, got {got!r}", tok)
        return tok

    def parse(self) -> Expr:
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise self.error(f"unexpected token {tok[1]!r}", tok)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        tok = self.advance()
        kind, value, _ = tok
        if kind == "num":
            return Num(float(value))
        if kind == "name":
            if value in VARIABLES:
                return Var(value)
            if value in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(value, arg)
            raise self.error(f"unknown identifier {value!r}", tok, UnknownIdentifier)
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise self.error(f"unexpected {value or 'end of input'!r}", tok)


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree."""
    return _Parser(text).parse()


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC["neg"]
    return 5


def to_string(e: Expr) -> str:
    """Render ``e`` with the minimal parentheses needed to re-parse it identically."""
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({to_string(e.arg)})"
    if isinstance(e, Neg):
        inner = to_string(e.operand)
        if _prec(e.operand) < _PREC["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    p = _PREC[e.op]
    left, right = to_string(e.left), to_string(e.right)
    if e.op == "^":
        # base must be an atom; exponent may be a unary or power chain
        if _prec(e.left) <= p:
            left = f"({left})"
        if _prec(e.right) < _PREC["neg"]:
            right = f"({right})"
    else:
        if _prec(e.left) < p:
            left = f"({left})"
        if _prec(e.right) <= p:
            right = f"({right})"
    return f"{left} {e.op} {right}"


def variables(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, Neg):
        return variables(e.operand)
    if isinstance(e, Call):
        return variables(e.arg)
    return variables(e.left) | variables(e.right)


def _is_const(e: Expr) -> bool:
    return not variables(e)


def _check(ok, message):
    if not np.all(ok):
        raise EvalDomainError(message)


def _dual(e: Expr, xyz, zero):
    """Return ``(value, grad)`` where ``grad`` has a leading axis of length 3."""
    if isinstance(e, Num):
        return zero + e.value, np.zeros((3,) + np.shape(zero))
    if isinstance(e, Var):
        k = VARIABLES.index(e.name)
        g = np.zeros((3,) + np.shape(zero))
        g[k] = 1.0
        return zero + xyz[k], g
    if isinstance(e, Neg):
        v, g = _dual(e.operand, xyz, zero)
        return -v, -g
    if isinstance(e, Call):
        v, g = _dual(e.arg, xyz, zero)
        if e.func == "sin":
            return np.sin(v), np.cos(v) * g
        if e.func == "cos":
            return np.cos(v), -np.sin(v) * g
        if e.func == "exp":
            ev = np.exp(v)
            return ev, ev * g
        _check(v >= 0.0, "sqrt of a negative number")
        r = np.sqrt(v)
        if np.any(g != 0.0):
            _check(r > 0.0, "sqrt is not differentiable at zero")
        with np.errstate(divide="ignore", invalid="ignore"):
            dg = np.where(g != 0.0, g / (2.0 * np.where(r > 0.0, r, 1.0)), 0.0)
        return r, dg
    a, ga = _dual(e.left, xyz, zero)
    if e.op == "^":
        if _is_const(e.right):
            b = _dual(e.right, xyz, zero)[0]
            bf = float(np.ravel(b)[0])
            if bf == int(bf) and abs(bf) < 64:
                n = int(bf)
                if n < 0:
                    _check(a != 0.0, "division by zero")
                if n == 0:
                    return zero + 1.0, np.zeros_like(ga)
                return _int_pow(a, n), n * _int_pow(a, n - 1) * ga
            _check(a > 0.0 if bf < 1.0 else a >= 0.0, "non-integer power of a negative number")
            return a ** bf, bf * a ** (bf - 1.0) * ga
        b, gb = _dual(e.right, xyz, zero)
        _check(a > 0.0, "variable exponent of a non-positive base")
        val = a ** b
        return val, b * a ** (b - 1.0) * ga + val * np.log(a) * gb
    b, gb = _dual(e.right, xyz, zero)
    if e.op == "+":
        return a + b, ga + gb
    if e.op == "-":
        return a - b, ga - gb
    if e.op == "*":
        return a * b, ga * b + a * gb
    _check(b != 0.0, "division by zero")
    return a / b, (ga * b - a * gb) / (b * b)


def _int_pow(a, n: int):
    if n < 0:
        return 1.0 / _int_pow(a, -n)
    out = np.ones_like(a) if isinstance(a, np.ndarray) else 1.0
    for _ in range(n):
        out = out * a
    return out


def eval_with_gradient(e: Expr, p) -> tuple[float, np.ndarray]:
    """Value and exact gradient ``(d/dx, d/dy, d/dz)`` of ``e`` at point ``p``."""
    p = np.asarray(p, dtype=float)
    v, g = _dual(e, p, np.float64(0.0))
    return float(v), np.asarray(g, dtype=float).reshape(3)


def eval_many(e: Expr, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised evaluation at ``points`` of shape (N, 3).

    Returns values (N,) and gradients (N, 3).
    """
    P = np.asarray(points, dtype=float)
    zero = np.zeros(P.shape[0])
    v, g = _dual(e, (P[:, 0], P[:, 1], P[:, 2]), zero)
    return np.asarray(v, dtype=float), np.moveaxis(np.asarray(g, dtype=float), 0, -1)


def eval_value(e: Expr, points: np.ndarray) -> np.ndarray:
    """Values only, skipping the derivative bookkeeping."""
    P = np.asarray(points, dtype=float)
    return _value(e, (P[:, 0], P[:, 1], P[:, 2]), np.zeros(P.shape[0]))


def _value(e: Expr, xyz, zero):
    if isinstance(e, Num):
        return zero + e.value
    if isinstance(e, Var):
        return zero + xyz[VARIABLES.index(e.name)]
    if isinstance(e, Neg):
        return -_value(e.operand, xyz, zero)
    if isinstance(e, Call):
        v = _value(e.arg, xyz, zero)
        if e.func == "sqrt":
            _check(v >= 0.0, "sqrt of a negative number")
        return getattr(np, e.func)(v)
    a = _value(e.left, xyz, zero)
    if e.op == "^":
        if _is_const(e.right):
            bf = float(np.ravel(_value(e.right, xyz, zero))[0])
            if bf == int(bf) and abs(bf) < 64:
                if bf < 0:
                    _check(a != 0.0, "division by zero")
                return _int_pow(a, int(bf))
            _check(a > 0.0 if bf < 1.0 else a >= 0.0, "non-integer power of a negative number")
            return a ** bf
        b = _value(e.right, xyz, zero)
        _check(a > 0.0, "variable exponent of a non-positive base")
        return a ** b
    b = _value(e.right, xyz, zero)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    _check(b != 0.0, "division by zero")
    return a / b
