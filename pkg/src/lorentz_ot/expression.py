"""A small arithmetic language for metric coefficients, weights and potentials.

Grammar (``^`` is right-associative and binds tighter than unary minus)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Names are the chart coordinates ``t, x1, x2, x3`` and the constant ``pi``.
Trees are immutable and compare structurally, so ``parse(to_text(tree)) == tree``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping

import numpy as np

COORDINATE_NAMES = ("t", "x1", "x2", "x3")
CONSTANTS = {"pi": math.pi}
FUNCTIONS = {"exp": 1, "log": 1, "sin": 1, "cos": 1, "sqrt": 1, "pow": 2}


class ExpressionError(ValueError):
    """Syntax, name or arity error; ``column`` is 1-based."""

    def __init__(self, message: str, column: int | None = None):
        self.column = column
        if column is not None:
            message = f"{message} (column {column})"
        super().__init__(message)


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expression"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Expression = Num | Var | Neg | BinOp | Call

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            col = pos + 1 + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExpressionError(f"unexpected character {text[col - 1]!r}", col)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start + 1))
        pos = m.end()
    tokens.append(("end", "", len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, text: str, names):
        self.tokens = _tokenize(text)
        self.i = 0
        self.names = names

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, col = self.take()
        if val != value:
            got = "end of input" if kind == "end" else repr(val)
            raise ExpressionError(f"expected {value!r}, got {got}", col)

    def parse(self):
        node = self.expr()
        kind, val, col = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected {val!r}", col)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, val, col = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if val not in FUNCTIONS:
                    raise ExpressionError(f"unknown function {val!r}", col)
                self.take()
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[val]:
                    raise ExpressionError(
                        f"{val} takes {FUNCTIONS[val]} argument(s), got {len(args)}", col
                    )
                return Call(val, tuple(args))
            if val in FUNCTIONS:
                raise ExpressionError(f"function {val!r} needs arguments", col)
            if val not in self.names and val not in CONSTANTS:
                raise ExpressionError(f"unknown identifier {val!r}", col)
            return Var(val)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        got = "end of input" if kind == "end" else repr(val)
        raise ExpressionError(f"unexpected {got}", col)


def parse_expression(text: str, names=COORDINATE_NAMES) -> Expression:
    """Parse ``text`` into an expression tree; raises ExpressionError."""
    return _Parser(text, tuple(names)).parse()


def _prec(node) -> int:
    if isinstance(node, BinOp):
        return {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}[node.op]
    if isinstance(node, Neg):
        return 3
    return 5


def to_text(node: Expression) -> str:
    """Print with the minimal parentheses needed to parse back to ``node``."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_text(a) for a in node.args)})"
    if isinstance(node, Neg):
        inner = to_text(node.arg)
        return f"-({inner})" if _prec(node.arg) < 3 else f"-{inner}"
    p = _prec(node)
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


def evaluate(node: Expression, env: Mapping[str, object]):
    """Evaluate with numpy broadcasting; ``env`` maps names to scalars or arrays."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        if node.name in env:
            return env[node.name]
        return CONSTANTS[node.name]
    if isinstance(node, Neg):
        return -evaluate(node.arg, env)
    if isinstance(node, Call):
        args = [evaluate(a, env) for a in node.args]
        if node.func == "pow":
            return np.power(args[0], args[1])
        return getattr(np, node.func)(args[0])
    a, b = evaluate(node.left, env), evaluate(node.right, env)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        return a / b
    return np.power(a, b)


def _num(x):
    return Num(float(x)) if x >= 0 else Neg(Num(float(-x)))


def _is(node, x):
    return isinstance(node, Num) and node.value == x


def _add(a, b):
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return _num(a.value + b.value)
    return BinOp("+", a, b)


def _sub(a, b):
    if _is(b, 0):
        return a
    if _is(a, 0):
        return _neg(b)
    return BinOp("-", a, b)


def _neg(a):
    if _is(a, 0):
        return a
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a, b):
    if _is(a, 0) or _is(b, 0):
        return Num(0.0)
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return _num(a.value * b.value)
    return BinOp("*", a, b)


def _div(a, b):
    if _is(a, 0):
        return Num(0.0)
    if _is(b, 1):
        return a
    return BinOp("/", a, b)


def derivative(node: Expression, var: str) -> Expression:
    """Symbolic derivative of ``node`` with respect to coordinate ``var``."""
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0) if node.name == var else Num(0.0)
    if isinstance(node, Neg):
        return _neg(derivative(node.arg, var))
    if isinstance(node, Call):
        a = node.args[0]
        da = derivative(a, var)
        f = node.func
        if f == "pow":
            return derivative(BinOp("^", node.args[0], node.args[1]), var)
        if _is(da, 0):
            return Num(0.0)
        if f == "exp":
            return _mul(node, da)
        if f == "log":
            return _div(da, a)
        if f == "sin":
            return _mul(Call("cos", (a,)), da)
        if f == "cos":
            return _neg(_mul(Call("sin", (a,)), da))
        if f == "sqrt":
            return _div(da, _mul(Num(2.0), node))
        raise ExpressionError(f"no derivative rule for {f}")
    a, b = node.left, node.right
    da, db = derivative(a, var), derivative(b, var)
    if node.op == "+":
        return _add(da, db)
    if node.op == "-":
        return _sub(da, db)
    if node.op == "*":
        return _add(_mul(da, b), _mul(a, db))
    if node.op == "/":
        return _div(_sub(_mul(da, b), _mul(a, db)), BinOp("^", b, Num(2.0)))
    # a^b
    if _is(db, 0):
        if _is(da, 0):
            return Num(0.0)
        return _mul(_mul(b, BinOp("^", a, _sub(b, Num(1.0)))), da)
    # general case: a^b (db log a + b da / a)
    return _mul(node, _add(_mul(db, Call("log", (a,))), _div(_mul(b, da), a)))


def free_names(node: Expression) -> set:
    if isinstance(node, Var):
        return set() if node.name in CONSTANTS else {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, Neg):
        return free_names(node.arg)
    if isinstance(node, Call):
        return set().union(*(free_names(a) for a in node.args))
    return free_names(node.left) | free_names(node.right)


def coordinate_env(X, n: int) -> dict:
    """Map coordinate names to the columns of ``X[..., :n]``."""
    X = np.asarray(X, dtype=float)
    return {name: X[..., i] for i, name in enumerate(COORDINATE_NAMES[:n])}
