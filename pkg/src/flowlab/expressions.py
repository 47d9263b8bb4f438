"""Expression grammar for user-defined coefficient fields and integrands.

Grammar (infix, case-sensitive):

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | atom
    atom    := NUMBER | 't' | 'x' | 'x1'..'x9' | func '(' expr (',' expr)* ')'
             | '(' expr ')'
    func    := 'exp' | 'log' | 'abs' | 'sign' | 'pow' | 'indicator'

`x` is an alias for `x1`. `indicator(r)` evaluates to 1 where the Euclidean
norm of the state is <= r and 0 elsewhere; `r` must fold to a constant.
`sign(0) = 0` and `log` is the natural logarithm. All expressions evaluate
vectorized over a batch of states.
"""
from __future__ import annotations

import re

import numpy as np


class ExpressionError(ValueError):
    """Raised on bad syntax or an out-of-range variable."""


_TOKEN = re.compile(r"\s*(?:(\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
                    r"|([A-Za-z_][A-Za-z_0-9]*)|(\*\*|[()+\-*/,]))")

_FUNCS = {"exp", "log", "abs", "sign", "pow", "indicator"}


def _tokenize(src: str) -> list[tuple[str, str]]:
    tokens, pos = [], 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if not m:
            raise ExpressionError(f"bad token at position {pos}: {src[pos:pos + 10]!r}")
        num, name, op = m.groups()
        if num is not None:
            tokens.append(("num", num))
        elif name is not None:
            tokens.append(("name", name))
        else:
            tokens.append(("op", op))
        pos = m.end()
    tokens.append(("end", ""))
    return tokens


class _Node:
    __slots__ = ("kind", "value", "args")

    def __init__(self, kind, value=None, args=()):
        self.kind = kind
        self.value = value
        self.args = args


class Expression:
    """A parsed scalar expression over (t, x_1..x_d)."""

    def __init__(self, source: str, dim: int):
        self.source = source
        self.dim = int(dim)
        self._root = _Parser(_tokenize(source), self.dim).parse()

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        """Evaluate on states `x` of shape (n, d); returns shape (n,)."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        out = _eval(self._root, float(t), x)
        return np.broadcast_to(np.asarray(out, dtype=float), (x.shape[0],)).copy()

    def __repr__(self):
        return f"Expression({self.source!r}, dim={self.dim})"


class _Parser:
    def __init__(self, tokens, dim):
        self.tokens = tokens
        self.dim = dim
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op):
        kind, val = self.next()
        if kind != "op" or val != op:
            raise ExpressionError(f"expected {op!r}, got {val!r}")

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise ExpressionError(f"trailing input: {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            op = self.next()[1]
            node = _Node("add" if op == "+" else "sub", args=(node, self.term()))
        return node

    def term(self):
        node = self.unary()
        while self.peek() == ("op", "*") or self.peek() == ("op", "/"):
            op = self.next()[1]
            node = _Node("mul" if op == "*" else "div", args=(node, self.unary()))
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.next()
            return _Node("neg", args=(self.unary(),))
        return self.atom()

    def atom(self):
        kind, val = self.next()
        if kind == "num":
            return _Node("const", float(val))
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "name":
            if val == "t":
                return _Node("time")
            if val == "x":
                return _Node("var", 0)
            if re.fullmatch(r"x[1-9]", val):
                idx = int(val[1]) - 1
                if idx >= self.dim:
                    raise ExpressionError(f"{val} out of range for dimension {self.dim}")
                return _Node("var", idx)
            if val in _FUNCS:
                self.expect("(")
                args = [self.expr()]
                while self.peek() == ("op", ","):
                    self.next()
                    args.append(self.expr())
                self.expect(")")
                return self._function(val, args)
            raise ExpressionError(f"unknown identifier {val!r}")
        raise ExpressionError(f"unexpected token {val!r}")

    def _function(self, name, args):
        arity = {"exp": 1, "log": 1, "abs": 1, "sign": 1, "pow": 2, "indicator": 1}[name]
        if len(args) != arity:
            raise ExpressionError(f"{name} takes {arity} argument(s), got {len(args)}")
        if name == "indicator":
            radius = _fold_const(args[0])
            if radius is None:
                raise ExpressionError("indicator radius must be a constant")
            return _Node("indicator", float(radius))
        return _Node(name, args=tuple(args))


def _fold_const(node):
    if node.kind == "const":
        return node.value
    if node.kind == "neg":
        inner = _fold_const(node.args[0])
        return None if inner is None else -inner
    ops = {"add": np.add, "sub": np.subtract, "mul": np.multiply, "div": np.divide}
    if node.kind in ops:
        a, b = (_fold_const(arg) for arg in node.args)
        return None if a is None or b is None else float(ops[node.kind](a, b))
    return None


def _eval(node, t, x):
    kind = node.kind
    if kind == "const":
        return node.value
    if kind == "time":
        return t
    if kind == "var":
        return x[:, node.value]
    if kind == "indicator":
        return (np.linalg.norm(x, axis=1) <= node.value).astype(float)
    args = [_eval(a, t, x) for a in node.args]
    if kind == "add":
        return np.add(*args)
    if kind == "sub":
        return np.subtract(*args)
    if kind == "mul":
        return np.multiply(*args)
    if kind == "div":
        return np.divide(*args)
    if kind == "neg":
        return np.negative(args[0])
    if kind == "exp":
        return np.exp(args[0])
    if kind == "log":
        return np.log(args[0])
    if kind == "abs":
        return np.abs(args[0])
    if kind == "sign":
        return np.sign(args[0])
    if kind == "pow":
        return np.power(*args)
    raise ExpressionError(f"unhandled node {kind}")


def parse_expression(source: str, dim: int) -> Expression:
    return Expression(source, dim)


def parse_scalar_function(source: str, dim: int):
    """Parse into a plain f(t, x)->(n,) callable for occupation integrands."""
    return Expression(source, dim)
