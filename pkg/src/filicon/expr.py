"""Expression language for vector-field components and switching functions.

Grammar (whitespace insignificant)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' exponent)?
    exponent := ['-'] INTEGER | '(' ['-'] INTEGER ')'
    atom   := NUMBER | IDENT | IDENT '(' expr (',' expr)* ')' | '(' expr ')'

Identifiers are the state variables ``x1`` .. ``x9`` and ``lambda``.
Functions: sin, cos, tanh, exp, sqrt, abs, mollifier (one argument) and
min, max (two arguments).  ``^`` binds tighter than unary minus, so
``-x1^2`` is ``-(x1^2)``.

Every node evaluates both pointwise (numpy float arrays) and over boxes
(:class:`~filicon.intervals.IA`).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import intervals as ia
from .intervals import IA

__all__ = [
    "Expr",
    "Num",
    "Var",
    "Lam",
    "Neg",
    "BinOp",
    "Pow",
    "Call",
    "ParseError",
    "parse_expr",
    "FUNCTIONS",
]


class ParseError(ValueError):
    """Syntax or name error in an expression, with a character offset."""

    def __init__(self, message: str, text: str, pos: int):
        self.text = text
        self.pos = pos
        super().__init__(f"{message} at position {pos}: {text!r}")


_POINT_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "mollifier": ia.mollifier_point,
    "min": np.minimum,
    "max": np.maximum,
}

_BOX_FUNCS = {
    "sin": ia.sin,
    "cos": ia.cos,
    "tanh": ia.tanh,
    "exp": ia.exp,
    "sqrt": ia.sqrt,
    "abs": ia.absolute,
    "mollifier": ia.mollifier,
    "min": ia.minimum,
    "max": ia.maximum,
}

FUNCTIONS = {name: (2 if name in ("min", "max") else 1) for name in _POINT_FUNCS}


class Expr:
    """Base class for AST nodes.

    ``evaluate(xs, lam)`` takes a sequence of per-variable float arrays;
    ``enclose(xs, lam)`` takes a sequence of :class:`IA` and an :class:`IA`
    for the parameter.
    """

    def evaluate(self, xs, lam):
        raise NotImplementedError

    def enclose(self, xs, lam: IA) -> IA:
        raise NotImplementedError

    def max_var(self) -> int:
        return 0

    def uses_lambda(self) -> bool:
        return False


@dataclass(frozen=True)
class Num(Expr):
    value: float

    def evaluate(self, xs, lam):
        return np.float64(self.value)

    def enclose(self, xs, lam):
        return IA.const(self.value)

    def __str__(self):
        return repr(float(self.value))


@dataclass(frozen=True)
class Var(Expr):
    index: int  # 1-based, as written

    def evaluate(self, xs, lam):
        return xs[self.index - 1]

    def enclose(self, xs, lam):
        return xs[self.index - 1]

    def max_var(self):
        return self.index

    def __str__(self):
        return f"x{self.index}"


@dataclass(frozen=True)
class Lam(Expr):
    def evaluate(self, xs, lam):
        return lam

    def enclose(self, xs, lam):
        return lam

    def uses_lambda(self):
        return True

    def __str__(self):
        return "lambda"


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr

    def evaluate(self, xs, lam):
        return -self.arg.evaluate(xs, lam)

    def enclose(self, xs, lam):
        return -self.arg.enclose(xs, lam)

    def max_var(self):
        return self.arg.max_var()

    def uses_lambda(self):
        return self.arg.uses_lambda()

    def __str__(self):
        return f"(-{self.arg})"


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def evaluate(self, xs, lam):
        a = self.left.evaluate(xs, lam)
        b = self.right.evaluate(xs, lam)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.op == "+":
                return a + b
            if self.op == "-":
                return a - b
            if self.op == "*":
                return a * b
            return np.true_divide(a, b)

    def enclose(self, xs, lam):
        a = self.left.enclose(xs, lam)
        b = self.right.enclose(xs, lam)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        return a / b

    def max_var(self):
        return max(self.left.max_var(), self.right.max_var())

    def uses_lambda(self):
        return self.left.uses_lambda() or self.right.uses_lambda()

    def __str__(self):
        return f"({self.left}{self.op}{self.right})"


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int

    def evaluate(self, xs, lam):
        b = np.asarray(self.base.evaluate(xs, lam), dtype=float)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return np.power(b, float(self.exponent))

    def enclose(self, xs, lam):
        return self.base.enclose(xs, lam) ** self.exponent

    def max_var(self):
        return self.base.max_var()

    def uses_lambda(self):
        return self.base.uses_lambda()

    def __str__(self):
        return f"({self.base}^{self.exponent})"


@dataclass(frozen=True)
class Call(Expr):
    name: str
    args: tuple[Expr, ...]

    def evaluate(self, xs, lam):
        vals = [a.evaluate(xs, lam) for a in self.args]
        with np.errstate(invalid="ignore", over="ignore"):
            return _POINT_FUNCS[self.name](*vals)

    def enclose(self, xs, lam):
        return _BOX_FUNCS[self.name](*[a.enclose(xs, lam) for a in self.args])

    def max_var(self):
        return max(a.max_var() for a in self.args)

    def uses_lambda(self):
        return any(a.uses_lambda() for a in self.args)

    def __str__(self):
        return f"{self.name}({','.join(str(a) for a in self.args)})"


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            at = len(text) - len(text[pos:].lstrip())
            raise ParseError(f"unexpected character {text[at]!r}", text, at)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, dims: int | None):
        self.text = text
        self.dims = dims
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.take()
        if val != value:
            found = "end of input" if kind == "end" else repr(val)
            raise ParseError(f"expected {value!r}, found {found}", self.text, pos)

    def error(self, message: str):
        raise ParseError(message, self.text, self.peek()[2])

    def parse(self) -> Expr:
        if self.peek()[0] == "end":
            self.error("empty expression")
        node = self.expr()
        if self.peek()[0] != "end":
            self.error(f"unexpected token {self.peek()[1]!r}")
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            base = Pow(base, self.exponent())
        return base

    def exponent(self) -> int:
        paren = self.peek()[:2] == ("op", "(")
        if paren:
            self.take()
        sign = 1
        if self.peek()[:2] == ("op", "-"):
            self.take()
            sign = -1
        kind, val, pos = self.take()
        if kind != "num" or not re.fullmatch(r"\d+", val):
            raise ParseError("exponent must be an integer literal", self.text, pos)
        if paren:
            self.expect(")")
        return sign * int(val)

    def atom(self) -> Expr:
        kind, val, pos = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if self.peek()[:2] == ("op", "("):
                return self.call(val, pos)
            if val == "lambda":
                return Lam()
            m = re.fullmatch(r"x([1-9])", val)
            if m:
                index = int(m.group(1))
                if self.dims is not None and index > self.dims:
                    raise ParseError(f"variable {val} exceeds dimension {self.dims}", self.text, pos)
                return Var(index)
            if val in FUNCTIONS:
                raise ParseError(f"function {val} needs arguments", self.text, pos)
            raise ParseError(f"unknown identifier {val!r}", self.text, pos)
        if (kind, val) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(val)
        raise ParseError(f"unexpected {found}", self.text, pos)

    def call(self, name: str, pos: int) -> Expr:
        if name not in FUNCTIONS:
            raise ParseError(f"unknown function {name!r}", self.text, pos)
        self.expect("(")
        args = [self.expr()]
        while self.peek()[:2] == ("op", ","):
            self.take()
            args.append(self.expr())
        self.expect(")")
        if len(args) != FUNCTIONS[name]:
            raise ParseError(
                f"{name} takes {FUNCTIONS[name]} argument(s), got {len(args)}", self.text, pos
            )
        return Call(name, tuple(args))


def parse_expr(text: str, dims: int | None = None) -> Expr:
    """Parse ``text``; if ``dims`` is given, reject variables beyond it."""
    return _Parser(text, dims).parse()
