"""Scalar expressions for problem definitions.

A small closed grammar used to write the drift ``f``, the impulsive fields
``g_j`` and the endpoint cost ``h`` of a problem file::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' exponent)*
    atom   := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'

``^`` binds tighter than unary minus, so ``-x^2`` is ``-(x^2)``, and its
exponent must be an integer literal (optionally signed or parenthesised).
Functions are ``sin``, ``cos``, ``exp``, ``log``, ``abs`` and ``sign``; the
last one exists so that derivatives of ``abs`` can be printed and parsed
back.

Trees are immutable.  Two evaluation paths exist: :func:`evaluate` walks the
tree in Python and raises :class:`DomainError`, while :func:`compile_tape`
flattens a list of expressions into a postfix program for the compiled
kernels in :mod:`impgap._kernels`, which signal domain errors with NaN.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Expr", "Const", "Var", "Neg", "BinOp", "Pow", "Func",
    "ParseError", "UndeclaredVariableError", "DomainError",
    "parse", "evaluate", "differentiate", "to_string", "variables",
    "is_zero", "Tape", "compile_tape", "FUNCTIONS",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "abs", "sign")


class ParseError(ValueError):
    """Syntax error at a character position of the source text."""

    def __init__(self, position: int, message: str, source: str = ""):
        self.position = position
        self.message = message
        self.source = source
        super().__init__(f"at position {position}: {message}")


class UndeclaredVariableError(ValueError):
    """A name in the source is not among the declared variables."""

    def __init__(self, name: str, position: int = -1):
        self.name = name
        self.position = position
        super().__init__(f"undeclared variable {name!r}")


class DomainError(ArithmeticError):
    """Evaluation left the domain of an operation.

    Attributes
    ----------
    node : Expr
        The offending subexpression (a division, ``log``, ``sign`` or a
        negative power).
    """

    def __init__(self, node: "Expr", message: str):
        self.node = node
        super().__init__(f"{message} in {to_string(node)}")


# ---------------------------------------------------------------- nodes


class Expr:
    """Base class of expression nodes."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # one of + - * /
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int


@dataclass(frozen=True)
class Func(Expr):
    name: str
    arg: Expr


ZERO = Const(0.0)
ONE = Const(1.0)


def _is_const(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


# Smart constructors: constant folding and the 0/1 identities only.

def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
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
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    if _is_const(b, 1.0):
        return a
    return BinOp("/", a, b)


def power(a: Expr, k: int) -> Expr:
    if k == 1:
        return a
    if isinstance(a, Const) and not (a.value == 0.0 and k < 0):
        return Const(float(a.value) ** k)
    if k == 0:
        # x^0 is 1 everywhere, including x = 0
        return ONE
    return Pow(a, k)


def func(name: str, a: Expr) -> Expr:
    if isinstance(a, Const):
        try:
            return Const(_apply_func(name, a.value, a))
        except DomainError:
            pass
    return Func(name, a)


# ---------------------------------------------------------------- parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    stripped = source.rstrip()
    while pos < len(stripped):
        m = _TOKEN.match(stripped, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(stripped[pos:]) - len(stripped[pos:].lstrip()))
            raise ParseError(bad, f"unexpected character {stripped[bad]!r}", source)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(stripped)))
    return tokens


class _Parser:
    def __init__(self, source: str, declared: frozenset[str]):
        self.source = source
        self.declared = declared
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message: str, tok=None):
        tok = tok or self.peek()
        raise ParseError(tok[2], message, self.source)

    def expect(self, text: str):
        tok = self.take()
        if tok[1] != text or tok[0] != "op":
            self.error(f"expected {text!r}", tok)

    def parse(self) -> Expr:
        e = self.expr()
        if self.peek()[0] != "end":
            self.error(f"unexpected {self.peek()[1]!r}")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def unary(self) -> Expr:
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.take()
            return neg(self.unary())
        if tok[0] == "op" and tok[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        e = self.atom()
        while self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            e = power(e, self.exponent())
        return e

    def exponent(self) -> int:
        paren = False
        if self.peek()[1] == "(":
            self.take()
            paren = True
        sign = 1
        if self.peek()[1] in ("-", "+") and self.peek()[0] == "op":
            sign = -1 if self.take()[1] == "-" else 1
        tok = self.take()
        if tok[0] != "num" or not re.fullmatch(r"\d+", tok[1]):
            self.error("exponent must be an integer literal", tok)
        if paren:
            self.expect(")")
        return sign * int(tok[1])

    def atom(self) -> Expr:
        tok = self.take()
        kind, text, pos = tok
        if kind == "num":
            return Const(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                if self.peek()[1] != "(":
                    self.error(f"expected '(' after {text}")
                self.take()
                arg = self.expr()
                self.expect(")")
                return func(text, arg)
            if text not in self.declared:
                raise UndeclaredVariableError(text, pos)
            return Var(text)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "end":
            self.error("unexpected end of input", tok)
        self.error(f"unexpected {text!r}", tok)


def parse(source: str, declared_vars: Iterable[str]) -> Expr:
    """Parse expression text.

    Parameters
    ----------
    source : str
        Non-empty expression text.
    declared_vars : iterable of str
        Names that may appear as variables.

    Returns
    -------
    Expr

    Raises
    ------
    ParseError
        On a syntax error; carries the character position.
    UndeclaredVariableError
        When a name is neither a function nor a declared variable.
    """
    if not isinstance(source, str) or not source.strip():
        raise ParseError(0, "empty expression", str(source))
    return _Parser(source, frozenset(declared_vars)).parse()


# ---------------------------------------------------------------- evaluation


def _apply_func(name: str, x: float, node: Expr) -> float:
    if name == "sin":
        return math.sin(x)
    if name == "cos":
        return math.cos(x)
    if name == "exp":
        try:
            return math.exp(x)
        except OverflowError:
            raise DomainError(node, "overflow") from None
    if name == "log":
        if x <= 0.0:
            raise DomainError(node, "log of non-positive argument")
        return math.log(x)
    if name == "abs":
        return abs(x)
    if name == "sign":
        if x == 0.0:
            raise DomainError(node, "sign at zero")
        return 1.0 if x > 0.0 else -1.0
    raise ValueError(f"unknown function {name!r}")


def evaluate(e: Expr, env: Mapping[str, float]) -> float:
    """Evaluate ``e`` with the variable values in ``env``.

    Raises
    ------
    DomainError
        For division by zero, ``log`` of a non-positive number, ``sign`` at
        zero, a negative power of zero, or overflow.
    KeyError
        If a variable of ``e`` is unbound.
    """
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return float(env[e.name])
    if isinstance(e, Neg):
        return -evaluate(e.arg, env)
    if isinstance(e, BinOp):
        a = evaluate(e.left, env)
        b = evaluate(e.right, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if b == 0.0:
            raise DomainError(e, "division by zero")
        return a / b
    if isinstance(e, Pow):
        a = evaluate(e.base, env)
        if a == 0.0 and e.exponent < 0:
            raise DomainError(e, "negative power of zero")
        try:
            return a ** e.exponent
        except OverflowError:
            raise DomainError(e, "overflow") from None
    if isinstance(e, Func):
        return _apply_func(e.name, evaluate(e.arg, env), e)
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------- calculus


def differentiate(e: Expr, var: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to ``var``.

    ``abs`` differentiates to ``sign``, which is undefined at zero, so the
    derivative of ``abs(u)`` raises :class:`DomainError` where ``u = 0``.
    """
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, Neg):
        return neg(differentiate(e.arg, var))
    if isinstance(e, BinOp):
        a, b = e.left, e.right
        da, db = differentiate(a, var), differentiate(b, var)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, b), mul(a, db))
        # quotient rule, kept as u'/v - u v'/v^2 so v = 0 stays a domain error
        return sub(div(da, b), div(mul(a, db), power(b, 2)))
    if isinstance(e, Pow):
        k = e.exponent
        return mul(mul(Const(float(k)), power(e.base, k - 1)), differentiate(e.base, var))
    if isinstance(e, Func):
        u = e.arg
        du = differentiate(u, var)
        if _is_const(du, 0.0):
            return ZERO
        if e.name == "sin":
            outer = func("cos", u)
        elif e.name == "cos":
            outer = neg(func("sin", u))
        elif e.name == "exp":
            outer = e
        elif e.name == "log":
            return div(du, u)
        elif e.name == "abs":
            outer = func("sign", u)
        elif e.name == "sign":
            return ZERO
        else:
            raise ValueError(f"unknown function {e.name!r}")
        return mul(outer, du)
    raise TypeError(f"not an expression: {e!r}")


def variables(e: Expr) -> frozenset[str]:
    """Names of the variables occurring in ``e``."""
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, (Neg, Func)):
        return variables(e.arg)
    if isinstance(e, Pow):
        return variables(e.base)
    return variables(e.left) | variables(e.right)


def is_zero(e: Expr) -> bool:
    """True when ``e`` is structurally the constant zero."""
    return _is_const(e, 0.0)


# ---------------------------------------------------------------- printing


def _fmt_const(v: float) -> str:
    s = repr(float(v))
    if s in ("inf", "-inf", "nan"):
        raise ValueError(f"cannot print non-finite constant {v}")
    return f"({s})" if v < 0 or s.startswith("-") else s


def to_string(e: Expr) -> str:
    """Print ``e`` so that :func:`parse` reads back an equivalent tree."""
    if isinstance(e, Const):
        return _fmt_const(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{_atom(e.arg)})"
    if isinstance(e, BinOp):
        return f"({to_string(e.left)} {e.op} {to_string(e.right)})"
    if isinstance(e, Pow):
        return f"{_atom(e.base)}^({e.exponent})"
    if isinstance(e, Func):
        return f"{e.name}({to_string(e.arg)})"
    raise TypeError(f"not an expression: {e!r}")


def _atom(e: Expr) -> str:
    s = to_string(e)
    if isinstance(e, (Var, Func)) or s.startswith("("):
        return s
    return f"({s})"


# ---------------------------------------------------------------- tapes

OP_CONST, OP_VAR, OP_NEG, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW = range(8)
OP_SIN, OP_COS, OP_EXP, OP_LOG, OP_ABS, OP_SIGN = range(8, 14)
_FUNC_OPS = {"sin": OP_SIN, "cos": OP_COS, "exp": OP_EXP,
             "log": OP_LOG, "abs": OP_ABS, "sign": OP_SIGN}
_BIN_OPS = {"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV}


@dataclass(frozen=True)
class Tape:
    """Postfix program for a list of expressions.

    Expression ``e`` occupies instructions ``off[e]:off[e+1]``; ``code``
    holds opcodes and ``arg`` the constant, variable index or exponent.
    """

    code: np.ndarray
    arg: np.ndarray
    off: np.ndarray
    stack_size: int

    @property
    def size(self) -> int:
        return len(self.off) - 1


def _emit(e: Expr, index: Mapping[str, int], code: list, arg: list) -> int:
    """Append postfix code for ``e``; return the stack depth it needs."""
    if isinstance(e, Const):
        code.append(OP_CONST)
        arg.append(e.value)
        return 1
    if isinstance(e, Var):
        code.append(OP_VAR)
        arg.append(float(index[e.name]))
        return 1
    if isinstance(e, Neg):
        d = _emit(e.arg, index, code, arg)
        code.append(OP_NEG)
        arg.append(0.0)
        return d
    if isinstance(e, BinOp):
        d1 = _emit(e.left, index, code, arg)
        d2 = _emit(e.right, index, code, arg)
        code.append(_BIN_OPS[e.op])
        arg.append(0.0)
        return max(d1, d2 + 1)
    if isinstance(e, Pow):
        d = _emit(e.base, index, code, arg)
        code.append(OP_POW)
        arg.append(float(e.exponent))
        return d
    if isinstance(e, Func):
        d = _emit(e.arg, index, code, arg)
        code.append(_FUNC_OPS[e.name])
        arg.append(0.0)
        return d
    raise TypeError(f"not an expression: {e!r}")


def compile_tape(exprs: Sequence[Expr], var_names: Sequence[str]) -> Tape:
    """Flatten ``exprs`` into one :class:`Tape`.

    Variable ``var_names[i]`` is read from slot ``i`` of the environment
    vector passed to the kernels.
    """
    index = {name: i for i, name in enumerate(var_names)}
    code: list[int] = []
    arg: list[float] = []
    off = [0]
    depth = 1
    for e in exprs:
        depth = max(depth, _emit(e, index, code, arg))
        off.append(len(code))
    return Tape(
        code=np.asarray(code, dtype=np.int64),
        arg=np.asarray(arg, dtype=np.float64),
        off=np.asarray(off, dtype=np.int64),
        stack_size=depth,
    )
