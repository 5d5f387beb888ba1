"""Small arithmetic expression language for problem data.

Expressions are used in case configs to describe exponent functions,
sources and initial data, e.g. ``"3 + tanh(t)"`` or ``"x*(1-x)/2"``.

Grammar (lowest to highest binding)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right-associative
    atom   := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

so ``-x^2`` is ``-(x^2)`` and ``2^3^2`` is ``2^(3^2)``.  Evaluation works
on floats and on numpy arrays alike.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

VARIABLES = frozenset({"x", "y", "t", "u", "s"})

# name -> arity
FUNCTIONS = {
    "sin": 1,
    "cos": 1,
    "exp": 1,
    "tanh": 1,
    "abs": 1,
    "min": 2,
    "max": 2,
    "clamp": 3,
}


class ParseError(ValueError):
    """Syntax or name error; ``offset`` is a byte offset into the UTF-8 source."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class EvalError(ArithmeticError):
    """Runtime evaluation failure.

    ``index`` is the flat index of the first offending sample when the
    expression was evaluated on arrays, else None.
    """

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


# --------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Expr = Union[Num, Var, Neg, BinOp, Call]


def free_variables(e: Expr) -> frozenset:
    if isinstance(e, Num):
        return frozenset()
    if isinstance(e, Var):
        return frozenset({e.name})
    if isinstance(e, Neg):
        return free_variables(e.arg)
    if isinstance(e, BinOp):
        return free_variables(e.left) | free_variables(e.right)
    return frozenset().union(*(free_variables(a) for a in e.args))


def to_source(e: Expr) -> str:
    """Print ``e`` fully parenthesized; ``parse(to_source(e)) == e``."""
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_source(e.arg)})"
    if isinstance(e, BinOp):
        return f"({to_source(e.left)} {e.op} {to_source(e.right)})"
    return f"{e.name}({', '.join(to_source(a) for a in e.args)})"


# --------------------------------------------------------------------------
# Lexing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # 'num', 'name', 'op', 'end'
    text: str
    offset: int  # byte offset


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    byte_pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", byte_pos)
        text = m.group()
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, text, byte_pos))
        pos = m.end()
        byte_pos += len(text.encode("utf-8"))
    tokens.append(_Token("end", "", byte_pos))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def _advance(self) -> _Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def _expect(self, text: str) -> None:
        if self.tok.text != text or self.tok.kind != "op":
            found = self.tok.text or "end of input"
            raise ParseError(f"expected {text!r}, found {found!r}", self.tok.offset)
        self._advance()

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            raise ParseError(
                f"expected operator or end of input, found {self.tok.text!r}",
                self.tok.offset,
            )
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self._advance().text
            left = BinOp(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self._advance().text
            left = BinOp(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self._advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self._advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self._advance()
            return Num(float(tok.text))
        if tok.kind == "name":
            self._advance()
            if self.tok.kind == "op" and self.tok.text == "(":
                return self._call(tok)
            if tok.text in FUNCTIONS:
                raise ParseError(f"function {tok.text!r} needs arguments", tok.offset)
            if tok.text not in VARIABLES:
                raise ParseError(f"unknown identifier {tok.text!r}", tok.offset)
            return Var(tok.text)
        if tok.kind == "op" and tok.text == "(":
            self._advance()
            e = self.expr()
            self._expect(")")
            return e
        found = tok.text or "end of input"
        raise ParseError(f"expected number, name or '(', found {found!r}", tok.offset)

    def _call(self, name_tok: _Token) -> Expr:
        name = name_tok.text
        if name not in FUNCTIONS:
            raise ParseError(f"unknown function {name!r}", name_tok.offset)
        self._expect("(")
        args = [self.expr()]
        while self.tok.kind == "op" and self.tok.text == ",":
            self._advance()
            args.append(self.expr())
        self._expect(")")
        if len(args) != FUNCTIONS[name]:
            raise ParseError(
                f"{name}() takes {FUNCTIONS[name]} argument(s), got {len(args)}",
                name_tok.offset,
            )
        return Call(name, tuple(args))


def parse(source: str) -> Expr:
    return _Parser(source).parse()


# --------------------------------------------------------------------------
# Evaluation

_UNARY = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "tanh": np.tanh,
    "abs": np.abs,
}


def _first_bad(mask) -> int | None:
    mask = np.asarray(mask)
    if mask.ndim == 0:
        return None
    return int(np.flatnonzero(mask)[0])


def _check_finite(result, what: str):
    bad = ~np.isfinite(result)
    if np.any(bad):
        raise EvalError(f"{what} produced a non-finite value", _first_bad(bad))
    return result


def _eval(e: Expr, env: Mapping[str, object]):
    if isinstance(e, Num):
        return np.float64(e.value)
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise EvalError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Neg):
        return -_eval(e.arg, env)
    if isinstance(e, BinOp):
        a = _eval(e.left, env)
        b = _eval(e.right, env)
        with np.errstate(all="ignore"):
            if e.op == "+":
                return _check_finite(a + b, "addition")
            if e.op == "-":
                return _check_finite(a - b, "subtraction")
            if e.op == "*":
                return _check_finite(a * b, "multiplication")
            if e.op == "/":
                zero = np.asarray(b) == 0
                if np.any(zero):
                    raise EvalError("division by zero", _first_bad(zero))
                return _check_finite(a / b, "division")
            # '^'
            bad = (np.asarray(a) == 0) & (np.asarray(b) < 0)
            if np.any(bad):
                raise EvalError("zero raised to a negative power", _first_bad(bad))
            return _check_finite(np.power(a, b), "power (domain error)")
    # Call
    args = [_eval(a, env) for a in e.args]
    with np.errstate(all="ignore"):
        if e.name in _UNARY:
            return _check_finite(_UNARY[e.name](args[0]), f"{e.name}()")
        if e.name == "min":
            return np.minimum(args[0], args[1])
        if e.name == "max":
            return np.maximum(args[0], args[1])
        v, lo, hi = args
        swapped = np.asarray(lo) > np.asarray(hi)
        if np.any(swapped):
            raise EvalError("clamp() with lo > hi", _first_bad(swapped))
        return np.minimum(np.maximum(v, lo), hi)


def evaluate(e: Expr, env: Mapping[str, object]):
    """Evaluate ``e`` under ``env``.

    Scalar environments give a Python float; if any bound value is an array
    the result is an ndarray broadcast against the inputs.
    """
    result = _eval(e, env)
    if np.ndim(result) == 0:
        return float(result)
    return np.asarray(result, dtype=float)


def compile_expr(source: str | Expr) -> Expr:
    return source if not isinstance(source, str) else parse(source)


def is_constant(e: Expr) -> bool:
    return not free_variables(e)


def constant_value(e: Expr) -> float:
    if not is_constant(e):
        raise ValueError("expression is not constant")
    return evaluate(e, {})


__all__ = [
    "BinOp",
    "Call",
    "EvalError",
    "Expr",
    "FUNCTIONS",
    "Neg",
    "Num",
    "ParseError",
    "VARIABLES",
    "Var",
    "compile_expr",
    "constant_value",
    "evaluate",
    "free_variables",
    "is_constant",
    "parse",
    "to_source",
]
