"""Small arithmetic expression language for model coefficients and payoffs.

Expressions are written in the variables ``x`` (short rate) and ``t``
(calendar time) plus free parameters, e.g. ``"k*(theta - x)"``.  The grammar
is a fixed recursive-descent grammar::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?
    primary := number | name | name '(' args ')' | '(' expr ')'

``^`` is right associative and binds tighter than unary minus, so ``-x^2``
means ``-(x^2)``.  Evaluation works on floats and on numpy arrays.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Mapping, Union

import numpy as np

__all__ = [
    "ExpressionError",
    "ParseError",
    "DomainError",
    "UnboundParameterError",
    "Expression",
    "parse",
    "evaluate",
    "derivative_fd",
    "central_difference",
]

UNARY_FUNCTIONS = ("exp", "ln", "sqrt", "abs")
BINARY_FUNCTIONS = ("min", "max")
RESERVED = frozenset({"x", "t", *UNARY_FUNCTIONS, *BINARY_FUNCTIONS})

ParamValue = Union[float, Callable[[float], float]]


class ExpressionError(Exception):
    """Base class for expression errors."""


class ParseError(ExpressionError):
    """Malformed source text.  ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class DomainError(ExpressionError, ArithmeticError):
    """Evaluation left the real domain (ln/sqrt of negatives, 0 division...)."""


class UnboundParameterError(ExpressionError, KeyError):
    def __str__(self) -> str:
        return f"unbound parameter {self.args[0]!r}"


# -- AST ---------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str  # "x" or "t"


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" or one of UNARY_FUNCTIONS
    arg: "Node"


@dataclass(frozen=True)
class Binary:
    op: str  # + - * / ^
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str  # min | max
    left: "Node"
    right: "Node"


Node = Union[Const, Var, Param, Unary, Binary, Call]


@dataclass(frozen=True)
class Expression:
    """Parsed, immutable expression tree."""

    ast: Node
    parameters: frozenset
    source: str = ""

    def __call__(self, x, t=0.0, params: Mapping[str, ParamValue] | None = None):
        return evaluate(self, x, t, params or {})

    def to_source(self) -> str:
        return _print(self.ast)

    def __str__(self) -> str:
        return self.to_source()


# -- tokenizer / parser ------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    raw = source.encode("utf-8")
    # offsets are reported in bytes; map char index -> byte index
    byte_at = [len(source[:i].encode("utf-8")) for i in range(len(source) + 1)]
    while pos < len(source):
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            start = pos
            while start < len(source) and source[start].isspace():
                start += 1
            raise ParseError(f"unexpected character {source[start]!r}", byte_at[start])
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), byte_at[m.start(kind)]))
        pos = m.end()
    tokens.append(("end", "", len(raw)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.i = 0
        self.params: set[str] = set()

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, offset = self.peek()
        if text != value or kind != "op":
            found = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, found {found}", offset)
        return self.advance()

    def parse(self) -> Node:
        node = self.expr()
        kind, text, offset = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {text!r}", offset)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Node:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.primary()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            return Binary("^", base, self.unary())
        return base

    def primary(self) -> Node:
        kind, text, offset = self.advance()
        if kind == "num":
            return Const(float(text))
        if kind == "name":
            if self.peek()[0] == "op" and self.peek()[1] == "(":
                return self.call(text, offset)
            if text in ("x", "t"):
                return Var(text)
            if text in UNARY_FUNCTIONS or text in BINARY_FUNCTIONS:
                raise ParseError(f"function {text!r} used without arguments", offset)
            self.params.add(text)
            return Param(text)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"unexpected {found}", offset)

    def call(self, name: str, offset: int) -> Node:
        if name not in UNARY_FUNCTIONS and name not in BINARY_FUNCTIONS:
            raise ParseError(f"unknown function {name!r}", offset)
        self.expect("(")
        args = [self.expr()]
        while self.peek()[0] == "op" and self.peek()[1] == ",":
            self.advance()
            args.append(self.expr())
        self.expect(")")
        want = 1 if name in UNARY_FUNCTIONS else 2
        if len(args) != want:
            raise ParseError(
                f"function {name!r} takes {want} argument(s), got {len(args)}", offset
            )
        if want == 1:
            return Unary(name, args[0])
        return Call(name, args[0], args[1])


def parse(source: str) -> Expression:
    """Parse ``source`` into an :class:`Expression`.

    Identifiers other than ``x``, ``t`` and the built-in function names are
    collected as parameters.

    >>> sorted(parse("k*(theta - x)").parameters)
    ['k', 'theta']
    """
    if not isinstance(source, str):
        raise TypeError("expression source must be text")
    parser = _Parser(source)
    ast = parser.parse()
    return Expression(ast, frozenset(parser.params), source)


# -- evaluation --------------------------------------------------------------


def _check(value, what: str):
    if not np.all(np.isfinite(value)):
        raise DomainError(f"non-finite result in {what}")
    return value


def _eval(node: Node, x, t, params):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return x if node.name == "x" else t
    if isinstance(node, Param):
        try:
            value = params[node.name]
        except KeyError:
            raise UnboundParameterError(node.name) from None
        if callable(value):
            value = value(t)
        return value
    if isinstance(node, Unary):
        a = _eval(node.arg, x, t, params)
        if node.op == "neg":
            return -a
        if node.op == "abs":
            return np.abs(a)
        if node.op == "exp":
            with np.errstate(over="ignore"):
                return _check(np.exp(a), "exp")
        if node.op == "ln":
            if np.any(np.asarray(a) <= 0):
                raise DomainError("ln of a non-positive number")
            return np.log(a)
        if node.op == "sqrt":
            if np.any(np.asarray(a) < 0):
                raise DomainError("sqrt of a negative number")
            return np.sqrt(a)
        raise AssertionError(node.op)
    if isinstance(node, Call):
        a = _eval(node.left, x, t, params)
        b = _eval(node.right, x, t, params)
        return np.minimum(a, b) if node.func == "min" else np.maximum(a, b)
    if isinstance(node, Binary):
        a = _eval(node.left, x, t, params)
        b = _eval(node.right, x, t, params)
        op = node.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if np.any(np.asarray(b) == 0):
                raise DomainError("division by zero")
            return a / b
        if op == "^":
            a_arr, b_arr = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
            if np.any((a_arr < 0) & (b_arr != np.round(b_arr))):
                raise DomainError("negative base with non-integer exponent")
            if np.any((a_arr == 0) & (b_arr < 0)):
                raise DomainError("zero raised to a negative power")
            with np.errstate(over="ignore"):
                return _check(np.power(a_arr, b_arr), "power")
        raise AssertionError(op)
    raise TypeError(f"not an expression node: {node!r}")


def evaluate(e: Expression, x, t=0.0, params: Mapping[str, ParamValue] | None = None):
    """Evaluate ``e`` at ``(x, t)``.  ``x`` may be a numpy array.

    Parameter values may be floats or callables of ``t`` (time tables).
    Returns a float for scalar input and an array otherwise.
    """
    params = params or {}
    scalar = np.ndim(x) == 0 and np.ndim(t) == 0
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = _eval(e.ast, x, t, params)
    value = np.broadcast_to(np.asarray(value, dtype=float), np.broadcast(x, t).shape)
    _check(value, "expression")
    return float(value) if scalar else np.array(value)


# -- printing ----------------------------------------------------------------


def _print(node: Node) -> str:
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, (Var, Param)):
        return node.name
    if isinstance(node, Unary):
        if node.op == "neg":
            return f"(-{_print(node.arg)})"
        return f"{node.op}({_print(node.arg)})"
    if isinstance(node, Call):
        return f"{node.func}({_print(node.left)}, {_print(node.right)})"
    return f"({_print(node.left)} {node.op} {_print(node.right)})"


# -- finite differences ------------------------------------------------------


def default_step(x) -> np.ndarray | float:
    return 1e-5 * np.maximum(1.0, np.abs(x))


def central_difference(fn: Callable, x, order: int, step=None):
    """Central 3-point estimate of the ``order``-th derivative of ``fn`` at x.

    ``fn`` must accept arrays.  Second order accurate in ``step``.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    x = np.asarray(x, dtype=float)
    h = default_step(x) if step is None else np.asarray(step, dtype=float)
    # make the stencil offsets exactly representable relative to x
    h = (x + h) - x
    f_plus = fn(x + h)
    f_minus = fn(x - h)
    if order == 1:
        return (f_plus - f_minus) / (2.0 * h)
    return (f_plus - 2.0 * fn(x) + f_minus) / (h * h)


def derivative_fd(
    e: Expression,
    x,
    t=0.0,
    params: Mapping[str, ParamValue] | None = None,
    order: int = 1,
    step=None,
):
    """Central finite-difference derivative of ``e`` in ``x``."""
    params = params or {}
    scalar = np.ndim(x) == 0
    value = central_difference(lambda z: evaluate(e, z, t, params), x, order, step)
    return float(value) if scalar else value

