"""A small arithmetic expression language for config-declared functions.

Grammar::

    expr   := term (("+"|"-") term)*
    term   := factor (("*"|"/") factor)*
    factor := "-" factor | power
    power  := atom ("^" factor)?
    atom   := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")"

``^`` is right-associative and binds tighter than unary minus, so ``-x^2``
is ``-(x^2)``. Variables are ``t``, ``s`` and ``x1, x2, ...``.
"""
from __future__ import annotations

import math
import re
import sys
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

from .errors import (
    ExprDepthError,
    ExprEvalError,
    ExprSyntaxError,
    UnknownFunctionError,
)

MAX_DEPTH = 256
MAX_TEXT = 64 * 1024

FUNCTIONS = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "tanh": math.tanh,
    "arctan": math.atan,
    "exp": math.exp,
    "ln": math.log,
    "abs": abs,
    "sqrt": math.sqrt,
}

_NP_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "tanh": np.tanh,
    "arctan": np.arctan,
    "exp": np.exp,
    "ln": np.log,
    "abs": np.abs,
    "sqrt": np.sqrt,
}

_VAR_RE = re.compile(r"^(t|s|x[1-9][0-9]*)$")


@dataclass(frozen=True)
class Num:
    value: float


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


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


@contextmanager
def _recursion_room(frames: int):
    old = sys.getrecursionlimit()
    if old < frames:
        sys.setrecursionlimit(frames)
    try:
        yield
    finally:
        if old < frames:
            sys.setrecursionlimit(old)


class _Parser:
    def __init__(self, text: str, variables: frozenset[str] | None):
        self.tokens = _tokenize(text)
        self.i = 0
        self.nesting = 0
        self.variables = variables

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.take()
        if text != value or kind != "op":
            raise ExprSyntaxError(f"expected {value!r}, found {text or 'end of input'!r}", pos)

    def _enter(self, pos):
        self.nesting += 1
        if self.nesting > MAX_DEPTH:
            raise ExprDepthError("expression nested too deeply", pos)

    def parse(self) -> Expression:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {text!r}", pos)
        if depth(node) > MAX_DEPTH:
            raise ExprDepthError("expression tree too deep", 0)
        return node

    def expr(self) -> Expression:
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expression:
        node = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Expression:
        kind, text, pos = self.peek()
        if kind == "op" and text == "-":
            self.take()
            self._enter(pos)
            node = Neg(self.factor())
            self.nesting -= 1
            return node
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        kind, text, pos = self.peek()
        if kind == "op" and text == "^":
            self.take()
            self._enter(pos)
            exponent = self.factor()
            self.nesting -= 1
            return BinOp("^", base, exponent)
        return base

    def atom(self) -> Expression:
        kind, text, pos = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            nxt = self.peek()
            if nxt[0] == "op" and nxt[1] == "(":
                if text not in FUNCTIONS:
                    raise UnknownFunctionError(f"unknown function {text!r}", pos)
                self.take()
                self._enter(pos)
                arg = self.expr()
                self.nesting -= 1
                self.expect(")")
                return Call(text, arg)
            if text in FUNCTIONS:
                raise ExprSyntaxError(f"function {text!r} requires an argument", pos)
            if not _VAR_RE.match(text):
                raise ExprSyntaxError(f"unknown variable {text!r}", pos)
            if self.variables is not None and text not in self.variables:
                raise ExprSyntaxError(f"variable {text!r} is not allowed here", pos)
            return Var(text)
        if kind == "op" and text == "(":
            self._enter(pos)
            node = self.expr()
            self.nesting -= 1
            self.expect(")")
            return node
        raise ExprSyntaxError(f"unexpected {text or 'end of input'!r}", pos)


def parse(text: str, variables: Iterable[str] | None = None) -> Expression:
    """Parse ``text`` into an AST; ``variables`` restricts the allowed names."""
    if not isinstance(text, str) or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    if len(text.encode("utf-8")) > MAX_TEXT:
        raise ExprSyntaxError("expression text exceeds 64 KiB", MAX_TEXT)
    allowed = frozenset(variables) if variables is not None else None
    with _recursion_room(8 * MAX_DEPTH + 2000):
        return _Parser(text, allowed).parse()


def depth(e: Expression) -> int:
    # iterative so pathological inputs cannot hit the recursion limit
    best = 0
    stack = [(e, 1)]
    while stack:
        node, d = stack.pop()
        best = max(best, d)
        if isinstance(node, BinOp):
            stack.append((node.left, d + 1))
            stack.append((node.right, d + 1))
        elif isinstance(node, (Neg,)):
            stack.append((node.operand, d + 1))
        elif isinstance(node, Call):
            stack.append((node.arg, d + 1))
    return best


def free_variables(e: Expression) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, Neg):
        return free_variables(e.operand)
    if isinstance(e, Call):
        return free_variables(e.arg)
    return free_variables(e.left) | free_variables(e.right)


def to_text(e: Expression) -> str:
    """Fully parenthesised text that parses back to the same tree."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_text(e.operand)})"
    if isinstance(e, Call):
        return f"{e.func}({to_text(e.arg)})"
    return f"({to_text(e.left)}{e.op}{to_text(e.right)})"


def _real_pow(a: float, b: float) -> float:
    return math.pow(a, b)


def _check(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise ExprEvalError(f"non-finite result in {what}")
    return value


def evaluate(e: Expression, env: dict[str, float]) -> float:
    """Evaluate with real arithmetic; any non-finite intermediate is an error."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return float(env[e.name])
        except KeyError:
            raise ExprEvalError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Neg):
        return -evaluate(e.operand, env)
    if isinstance(e, Call):
        x = evaluate(e.arg, env)
        try:
            return _check(FUNCTIONS[e.func](x), e.func)
        except (ValueError, OverflowError):
            raise ExprEvalError(f"{e.func}({x}) is undefined or overflows") from None
    a = evaluate(e.left, env)
    b = evaluate(e.right, env)
    try:
        if e.op == "+":
            r = a + b
        elif e.op == "-":
            r = a - b
        elif e.op == "*":
            r = a * b
        elif e.op == "/":
            r = a / b
        else:
            r = _real_pow(a, b)
    except (ZeroDivisionError, ValueError, OverflowError):
        raise ExprEvalError(f"undefined operation {a!r} {e.op} {b!r}") from None
    return _check(r, e.op)


def _source(e: Expression, names: dict[str, str], pow_name: str, prefix: str) -> str:
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return names[e.name]
    if isinstance(e, Neg):
        return f"(-{_source(e.operand, names, pow_name, prefix)})"
    if isinstance(e, Call):
        return f"{prefix}{e.func}({_source(e.arg, names, pow_name, prefix)})"
    left = _source(e.left, names, pow_name, prefix)
    right = _source(e.right, names, pow_name, prefix)
    if e.op == "^":
        return f"{pow_name}({left}, {right})"
    return f"({left} {e.op} {right})"


def compile_vector(exprs: list[Expression], argnames: list[str], vectorized: bool = False):
    """Compile expressions into one Python function returning a tuple.

    The generated function takes positional arguments named by ``argnames``.
    With ``vectorized=True`` numpy ufuncs are used so arrays may be passed;
    otherwise the ``math`` module is used and domain errors raise
    ``ExprEvalError`` like :func:`evaluate`.
    """
    names = {a: f"_a{i}" for i, a in enumerate(argnames)}
    for e in exprs:
        missing = free_variables(e) - set(names)
        if missing:
            raise ExprEvalError(f"unbound variable(s) {sorted(missing)}")
    prefix = "_f_"
    table = _NP_FUNCTIONS if vectorized else FUNCTIONS
    namespace = {f"{prefix}{k}": v for k, v in table.items()}
    namespace["_pow"] = np.power if vectorized else _real_pow
    body = ", ".join(_source(e, names, "_pow", prefix) for e in exprs)
    params = ", ".join(names[a] for a in argnames)
    src = f"def _compiled({params}):\n    return ({body},)\n"
    try:
        with _recursion_room(8 * MAX_DEPTH + 2000):
            code = compile(src, "<expr>", "exec")
    except (SyntaxError, RecursionError, MemoryError):
        # CPython caps nested parentheses; deep trees use the tree walker
        code = None
    if code is None:
        if vectorized:
            raise ExprEvalError("expression too deep for vectorized evaluation")

        def fn(*args):
            env = dict(zip(argnames, args))
            return tuple(evaluate(e, env) for e in exprs)
    else:
        exec(code, namespace)
        fn = namespace["_compiled"]
    if vectorized:
        return fn

    def checked(*args):
        try:
            out = fn(*args)
        except (ZeroDivisionError, ValueError, OverflowError) as exc:
            raise ExprEvalError(f"expression evaluation failed: {exc}") from None
        for v in out:
            if not math.isfinite(v):
                raise ExprEvalError("non-finite result")
        return out

    checked.raw = fn
    return checked
