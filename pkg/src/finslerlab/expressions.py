"""Minimal arithmetic expression grammar for metric parameters and fields.

Supports + - * / (also the unicode glyphs), powers via ^ or **, the
functions sqrt, exp, sin, cos, parentheses, numeric literals and variables
named x1..xn / y1..yn.  Expressions evaluate uniformly on floats, numpy
arrays (batched points) and MultiDual numbers, so the same compiled tree
serves plain evaluation, vectorized sampling and exact differentiation.

No host-language evaluation is involved; the parser below is the entire
grammar.
"""

from __future__ import annotations

import re

import numpy as np

from . import diffcore as dc
from .errors import DomainEvalError, ExpressionError

_TOKEN_RE = re.compile(
    r"""\s*(?:
        (?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
      | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
      | (?P<op>\*\*|[()+\-*/^×÷−])
    )""",
    re.VERBOSE,
)

_FUNCTIONS = {
    "sqrt": dc.sqrt,
    "exp": dc.exp,
    "sin": dc.sin,
    "cos": dc.cos,
}

_OP_ALIASES = {"×": "*", "÷": "/", "−": "-", "**": "^"}


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip():
                raise ExpressionError("unrecognized character", text, pos)
            break
        if m.group("num") is not None:
            tokens.append(("num", float(m.group("num")), m.start("num")))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name"), m.start("name")))
        else:
            op = _OP_ALIASES.get(m.group("op"), m.group("op"))
            tokens.append(("op", op, m.start("op")))
        pos = m.end()
    tokens.append(("end", None, len(text)))
    return tokens


class _Node:
    __slots__ = ("kind", "payload", "children", "src")

    def __init__(self, kind, payload, children, src):
        self.kind = kind
        self.payload = payload
        self.children = children
        self.src = src

    def eval(self, env):
        kind = self.kind
        if kind == "num":
            return self.payload
        if kind == "var":
            return env[self.payload]
        if kind == "neg":
            return -self.children[0].eval(env)
        a = self.children[0].eval(env)
        if kind == "call":
            fn = _FUNCTIONS[self.payload]
            try:
                with np.errstate(invalid="ignore", divide="ignore"):
                    out = fn(a)
            except DomainEvalError as err:
                raise DomainEvalError(str(err).split(" in '")[0], self.src) from None
            return self._checked(out)
        b = self.children[1].eval(env)
        if kind == "+":
            return a + b
        if kind == "-":
            return a - b
        if kind == "*":
            return a * b
        if kind == "/":
            try:
                with np.errstate(invalid="ignore", divide="ignore"):
                    out = a / b
            except (ZeroDivisionError, DomainEvalError):
                raise DomainEvalError("division by zero", self.src) from None
            return self._checked(out)
        if kind == "^":
            try:
                out = a**b if not isinstance(a, dc.MultiDual) else a ** self._expo(b)
            except DomainEvalError as err:
                raise DomainEvalError(str(err).split(" in '")[0], self.src) from None
            return self._checked(out)
        raise AssertionError(f"unknown node kind {kind}")

    @staticmethod
    def _expo(b):
        if isinstance(b, dc.MultiDual):
            raise DomainEvalError("exponent may not depend on the variables")
        return b

    def _checked(self, out):
        if isinstance(out, dc.MultiDual):
            if not out.isfinite():
                raise DomainEvalError("non-finite value", self.src)
        else:
            arr = np.asarray(out)
            if not np.all(np.isfinite(arr)):
                raise DomainEvalError("non-finite value", self.src)
        return out

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val, pos = self.next()
        if kind != "op" or val != op:
            raise ExpressionError(f"expected '{op}'", self.text, pos)

    def src(self, start, end):
        return self.text[start:end].strip()

    def parse(self):
        node = self.expr()
        kind, _, pos = self.peek()
        if kind != "end":
            raise ExpressionError("unexpected trailing input", self.text, pos)
        return node

    def expr(self):
        start = self.peek()[2]
        node = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.next()
                rhs = self.term()
                node = _Node(val, None, (node, rhs), self.src(start, self.peek()[2]))
            else:
                return node

    def term(self):
        start = self.peek()[2]
        node = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.next()
                rhs = self.unary()
                node = _Node(val, None, (node, rhs), self.src(start, self.peek()[2]))
            else:
                return node

    def unary(self):
        kind, val, pos = self.peek()
        if kind == "op" and val in "+-":
            self.next()
            inner = self.unary()
            if val == "-":
                return _Node("neg", None, (inner,), self.src(pos, self.peek()[2]))
            return inner
        return self.power()

    def power(self):
        start = self.peek()[2]
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.next()
            expo = self.unary()  # right associative, allows -2 etc.
            return _Node("^", None, (base, expo), self.src(start, self.peek()[2]))
        return base

    def atom(self):
        kind, val, pos = self.next()
        if kind == "num":
            return _Node("num", val, (), self.src(pos, self.peek()[2]))
        if kind == "name":
            nk, nv, _ = self.peek()
            if nk == "op" and nv == "(":
                if val not in _FUNCTIONS:
                    raise ExpressionError(f"unknown function '{val}'", self.text, pos)
                self.next()
                arg = self.expr()
                self.expect_op(")")
                return _Node("call", val, (arg,), self.src(pos, self.peek()[2]))
            return _Node("var", val, (), val)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ExpressionError("expected a number, variable or '('", self.text, pos)


class Expression:
    """A compiled expression over variables x1..xn, y1..yn."""

    def __init__(self, text: str, n: int, allow_y: bool = True):
        self.text = text
        self.n = n
        self.root = _Parser(text).parse()
        allowed = {f"x{i+1}" for i in range(n)}
        if allow_y:
            allowed |= {f"y{i+1}" for i in range(n)}
        self.variables = set()
        for node in self.root.walk():
            if node.kind == "var":
                if node.payload not in allowed:
                    raise ExpressionError(
                        f"unknown variable '{node.payload}' (dimension n={n})", text
                    )
                self.variables.add(node.payload)

    @property
    def uses_y(self) -> bool:
        return any(v.startswith("y") for v in self.variables)

    def __call__(self, x, y=None):
        """Evaluate with x, y given as sequences of floats/arrays/MultiDuals."""
        env = {}
        for i in range(self.n):
            env[f"x{i+1}"] = x[i]
            if y is not None:
                env[f"y{i+1}"] = y[i]
        return self.root.eval(env)

    def __repr__(self):
        return f"Expression({self.text!r})"


def compile_expression(text: str, n: int, allow_y: bool = True) -> Expression:
    if not isinstance(text, str):
        raise ExpressionError(f"expression must be a string, got {type(text).__name__}")
    return Expression(text, n, allow_y=allow_y)
