"""A small arithmetic expression language.

Grammar (``^`` binds tightest and associates to the right, then unary minus,
then ``* /``, then ``+ -``)::

    expr  := term (("+" | "-") term)*
    term  := unary (("*" | "/") unary)*
    unary := "-" unary | power
    power := atom ("^" unary)?
    atom  := number | name | func "(" expr ")" | "(" expr ")"

Functions: sin, cos, exp, log, sqrt.  The constant ``pi`` is a number.
Errors carry the byte offset of the offending token in the UTF-8 source.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Union

import numpy as np

__all__ = [
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "Expression",
    "ExpressionError",
    "ExpressionSyntaxError",
    "UnknownIdentifierError",
    "ArityError",
    "ExpressionDomainError",
    "FUNCTIONS",
    "parse_expression",
    "to_text",
    "evaluate",
    "variables",
    "derivative",
    "simplify",
    "compile_function",
    "compile_gradient",
    "compile_batch",
    "compile_gradient_batch",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")


@dataclass(frozen=True)
class Num:
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        if not (math.isfinite(self.value) and self.value >= 0):
            raise ValueError("numeric literals are finite and non-negative")


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expression"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expression"


Expression = Union[Num, Var, Neg, BinOp, Call]


class ExpressionError(ValueError):
    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        super().__init__(message if offset is None else f"{message} (at byte {offset})")


class ExpressionSyntaxError(ExpressionError):
    pass


class UnknownIdentifierError(ExpressionError):
    pass


class ArityError(ExpressionError):
    pass


class ExpressionDomainError(ExpressionError):
    pass


_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
""", re.VERBOSE)


def _tokenize(text: str):
    tokens = []
    i = 0
    byte = 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if m is None:
            raise ExpressionSyntaxError(f"unexpected character {text[i]!r}", byte)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), byte))
        byte += len(m.group().encode("utf-8"))
        i = m.end()
    tokens.append(("end", "", byte))
    return tokens


class _Parser:
    def __init__(self, text: str, allowed: frozenset | None):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.allowed = allowed

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, value: str):
        kind, text, off = self.take()
        if text != value:
            found = "end of input" if kind == "end" else repr(text)
            raise ExpressionSyntaxError(f"expected {value!r}, found {found}", off)

    def parse(self) -> Expression:
        node = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected {text!r}", off)
        return node

    def expr(self) -> Expression:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expression:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expression:
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expression:
        kind, text, off = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                if self.peek()[1] != "(":
                    raise ArityError(f"function {text} needs one parenthesized argument", off)
                self.take()
                arg = self.expr()
                if self.peek()[1] == ",":
                    raise ArityError(f"function {text} takes exactly one argument", self.peek()[2])
                self.expect(")")
                return Call(text, arg)
            if text == "pi":
                return Num(math.pi)
            if self.allowed is not None and text not in self.allowed:
                raise UnknownIdentifierError(f"unknown identifier {text!r}", off)
            if self.peek()[1] == "(":
                raise UnknownIdentifierError(f"unknown function {text!r}", off)
            return Var(text)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ExpressionSyntaxError(f"expected a number, name or '(', found {found}", off)


def parse_expression(text: str | bytes, allowed: Iterable[str] | None = None) -> Expression:
    """Parse ``text``; with ``allowed`` set, other identifiers are rejected."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ExpressionSyntaxError("input is not valid UTF-8", exc.start) from None
    return _Parser(text, None if allowed is None else frozenset(allowed)).parse()


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(node: Expression) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    return 5


def _num_text(v: float) -> str:
    if v.is_integer() and v < 1e15:
        return str(int(v))
    return repr(v)


def to_text(node: Expression) -> str:
    """Print with the minimum parentheses needed to parse back to the same tree."""
    if isinstance(node, Num):
        return _num_text(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({to_text(node.arg)})"
    if isinstance(node, Neg):
        inner = to_text(node.operand)
        return "-" + (f"({inner})" if _prec(node.operand) < 3 else inner)
    p = _PREC[node.op]
    left, right = to_text(node.left), to_text(node.right)
    if node.op == "^":
        if _prec(node.left) < 5:
            left = f"({left})"
        if _prec(node.right) < 3:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {node.op} {right}"


def variables(node: Expression) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, (Neg, Call)):
        return variables(node.operand if isinstance(node, Neg) else node.arg)
    return variables(node.left) | variables(node.right)


def _domain_checked(func: str, a):
    if func == "log" and np.any(a <= 0):
        raise ExpressionDomainError("log of a non-positive number")
    if func == "sqrt" and np.any(a < 0):
        raise ExpressionDomainError("sqrt of a negative number")
    return getattr(np, func)(a)


def _divide(a, b):
    if np.any(np.asarray(b) == 0):
        raise ExpressionDomainError("division by zero")
    return a / b


def _power(a, b):
    a_arr, b_arr = np.asarray(a), np.asarray(b)
    if np.any((a_arr < 0) & (b_arr != np.round(b_arr))):
        raise ExpressionDomainError("negative base with a non-integer exponent")
    if np.any((a_arr == 0) & (b_arr < 0)):
        raise ExpressionDomainError("zero raised to a negative power")
    return np.power(a, b)


_BINARY = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": _divide, "^": _power}


@lru_cache(maxsize=4096)
def _compile(node: Expression) -> Callable:
    """Closure ``env -> value`` for ``node``; avoids re-walking the tree on every call."""
    if isinstance(node, Num):
        v = node.value
        return lambda env: v
    if isinstance(node, Var):
        name = node.name

        def var(env):
            try:
                return env[name]
            except KeyError:
                raise UnknownIdentifierError(f"no value for {name!r}") from None
        return var
    if isinstance(node, Neg):
        inner = _compile(node.operand)
        return lambda env: -inner(env)
    if isinstance(node, Call):
        arg, func = _compile(node.arg), node.func
        return lambda env: _domain_checked(func, np.asarray(arg(env), dtype=float))
    left, right, op = _compile(node.left), _compile(node.right), _BINARY[node.op]
    return lambda env: op(np.asarray(left(env), dtype=float), np.asarray(right(env), dtype=float))


def evaluate(node: Expression, env: dict):
    """Evaluate with numpy; values in ``env`` may be scalars or arrays."""
    with np.errstate(over="raise", invalid="raise", divide="raise"):
        try:
            out = _compile(node)(env)
        except FloatingPointError as exc:
            raise ExpressionDomainError(f"floating-point error: {exc}") from None
    out = np.asarray(out, dtype=float)
    return out if out.ndim else float(out)


_ZERO, _ONE = Num(0.0), Num(1.0)


def simplify(node: Expression) -> Expression:
    """Fold the trivial identities that differentiation produces."""
    if isinstance(node, (Num, Var)):
        return node
    if isinstance(node, Neg):
        a = simplify(node.operand)
        if a == _ZERO:
            return _ZERO
        if isinstance(a, Neg):
            return a.operand
        return Neg(a)
    if isinstance(node, Call):
        return Call(node.func, simplify(node.arg))
    a, b = simplify(node.left), simplify(node.right)
    op = node.op
    if isinstance(a, Num) and isinstance(b, Num) and op in "+-*":
        if op == "-":
            diff = a.value - b.value
            return Num(diff) if diff >= 0 else Neg(Num(-diff))
        return Num(a.value + b.value if op == "+" else a.value * b.value)
    if op == "+":
        if a == _ZERO:
            return b
        if b == _ZERO:
            return a
    elif op == "-":
        if b == _ZERO:
            return a
        if a == _ZERO:
            return simplify(Neg(b))
    elif op == "*":
        if a == _ZERO or b == _ZERO:
            return _ZERO
        if a == _ONE:
            return b
        if b == _ONE:
            return a
    elif op == "/":
        if a == _ZERO:
            return _ZERO
        if b == _ONE:
            return a
    elif op == "^":
        if b == _ZERO:
            return _ONE
        if b == _ONE:
            return a
    return BinOp(op, a, b)


def _d(node: Expression, x: str) -> Expression:
    if isinstance(node, Num):
        return _ZERO
    if isinstance(node, Var):
        return _ONE if node.name == x else _ZERO
    if isinstance(node, Neg):
        return Neg(_d(node.operand, x))
    if isinstance(node, Call):
        u, du = node.arg, _d(node.arg, x)
        outer = {
            "sin": Call("cos", u),
            "cos": Neg(Call("sin", u)),
            "exp": Call("exp", u),
            "log": BinOp("/", _ONE, u),
            "sqrt": BinOp("/", _ONE, BinOp("*", Num(2.0), Call("sqrt", u))),
        }[node.func]
        return BinOp("*", outer, du)
    a, b = node.left, node.right
    da, db = _d(a, x), _d(b, x)
    if node.op in "+-":
        return BinOp(node.op, da, db)
    if node.op == "*":
        return BinOp("+", BinOp("*", da, b), BinOp("*", a, db))
    if node.op == "/":
        return BinOp("/", BinOp("-", BinOp("*", da, b), BinOp("*", a, db)), BinOp("^", b, Num(2.0)))
    if x not in variables(b):
        return BinOp("*", BinOp("*", b, BinOp("^", a, BinOp("-", b, _ONE))), da)
    return BinOp("*", node, BinOp("+", BinOp("*", db, Call("log", a)), BinOp("/", BinOp("*", b, da), a)))


def derivative(node: Expression, x: str) -> Expression:
    """Symbolic partial derivative with respect to the variable ``x``."""
    return simplify(_d(node, x))


def compile_function(node: Expression, names: list[str]) -> Callable:
    """``z -> float`` with ``z[i]`` bound to ``names[i]``."""
    def f(z):
        return float(evaluate(node, dict(zip(names, np.asarray(z, dtype=float)))))
    return f


def compile_batch(node: Expression, names: list[str]) -> Callable:
    """``Z -> array`` over the rows of ``Z`` (shape ``(M, len(names))``)."""
    def f(Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        out = evaluate(node, dict(zip(names, Z.T)))
        return np.broadcast_to(np.asarray(out, dtype=float), (Z.shape[0],)).copy()
    return f


def compile_gradient_batch(node: Expression, names: list[str]) -> Callable:
    """``Z -> (M, len(names))`` array of symbolic partials."""
    parts = [compile_batch(derivative(node, name), names) for name in names]

    def g(Z):
        return np.stack([p(Z) for p in parts], axis=-1)
    return g


def compile_gradient(node: Expression, names: list[str]) -> Callable:
    """``z -> array`` of symbolic partials with respect to each of ``names``."""
    parts = [derivative(node, name) for name in names]

    def g(z):
        env = dict(zip(names, np.asarray(z, dtype=float)))
        return np.array([float(evaluate(p, env)) for p in parts])
    return g
