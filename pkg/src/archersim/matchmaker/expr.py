"""A small ClassAd-style expression language.

Literals (true, false, undefined, integers, reals, "strings"), attribute
references (``my.X``, ``other.X`` and bare ``X``), ``! -`` prefix
operators, arithmetic, comparisons, ``&&`` and ``||``.  Evaluation never
raises: type errors, missing attributes and division by zero all produce
:data:`UNDEFINED`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import TYPE_CHECKING, Union

if TYPE_CHECKING:
    from .ads import Ad


class _Undefined:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNDEFINED"

    def __bool__(self):
        return False

    def __reduce__(self):
        return (_Undefined, ())


UNDEFINED = _Undefined()

Value = Union[bool, int, float, str, _Undefined]


class ExpressionSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"syntax error at position {position}: {message}")
        self.position = position


class UnknownOperator(ExpressionSyntaxError):
    pass


# -- AST --------------------------------------------------------------------

@dataclass(frozen=True)
class Literal:
    value: Value

    # True == 1 == 1.0 in Python; literals of different types are different trees
    def __eq__(self, other):
        return (isinstance(other, Literal) and type(self.value) is type(other.value)
                and self.value == other.value)

    def __hash__(self):
        return hash((type(self.value), self.value))


@dataclass(frozen=True)
class AttrRef:
    scope: str | None  # "my", "other" or None for bare names
    name: str

    def __eq__(self, other):
        return (isinstance(other, AttrRef) and self.scope == other.scope
                and self.name.lower() == other.name.lower())

    def __hash__(self):
        return hash((self.scope, self.name.lower()))


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expression"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expression"
    right: "Expression"


Expression = Union[Literal, AttrRef, Unary, Binary]

BINARY_PRECEDENCE = {
    "||": 1,
    "&&": 2,
    "==": 3, "!=": 3,
    "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5,
    "*": 6, "/": 6,
}

# -- lexer ------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<real>(?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)
  | (?P<int>\d+)
  | (?P<str>"(?:[^"\\]|\\.)*")
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\|\||&&|==|!=|<=|>=|[<>+\-*/!().])
    """,
    re.VERBOSE,
)

_OPERATOR_CHARS = set("=|&%^~?:,;[]{}@#$'`\\")


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            ch = text[pos]
            if ch == '"':
                raise ExpressionSyntaxError("unterminated string", pos)
            if ch in _OPERATOR_CHARS:
                # grab a run of operator characters for the message
                end = pos
                while end < len(text) and (text[end] in _OPERATOR_CHARS or text[end] in "<>!"):
                    end += 1
                raise UnknownOperator(f"unknown operator {text[pos:end]!r}", pos)
            raise ExpressionSyntaxError(f"unexpected character {ch!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), pos))
        pos = m.end()
    toks.append(_Tok("eof", "", len(text)))
    return toks


_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t", "r": "\r"}


def _unquote(tok: _Tok) -> str:
    out = []
    body = tok.text[1:-1]
    i = 0
    while i < len(body):
        c = body[i]
        if c == "\\":
            nxt = body[i + 1]
            if nxt not in _ESCAPES:
                raise ExpressionSyntaxError(f"bad escape \\{nxt}", tok.pos + i + 1)
            out.append(_ESCAPES[nxt])
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


# -- parser -----------------------------------------------------------------

class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def parse(self) -> Expression:
        expr = self.expression(0)
        if self.tok.kind != "eof":
            raise ExpressionSyntaxError(f"unexpected {self.tok.text!r}", self.tok.pos)
        return expr

    def expression(self, min_prec: int) -> Expression:
        left = self.unary()
        while self.tok.kind == "op" and self.tok.text in BINARY_PRECEDENCE:
            op = self.tok.text
            prec = BINARY_PRECEDENCE[op]
            if prec <= min_prec:
                break
            self.advance()
            right = self.expression(prec)
            left = Binary(op, left, right)
        return left

    def unary(self) -> Expression:
        t = self.tok
        if t.kind == "op" and t.text in ("!", "-"):
            self.advance()
            return Unary(t.text, self.unary())
        return self.primary()

    def primary(self) -> Expression:
        t = self.advance()
        if t.kind == "int":
            return Literal(int(t.text))
        if t.kind == "real":
            return Literal(float(t.text))
        if t.kind == "str":
            return Literal(_unquote(t))
        if t.kind == "name":
            low = t.text.lower()
            if low == "true":
                return Literal(True)
            if low == "false":
                return Literal(False)
            if low == "undefined":
                return Literal(UNDEFINED)
            if low in ("my", "other") and self.tok.text == ".":
                self.advance()
                name = self.advance()
                if name.kind != "name":
                    raise ExpressionSyntaxError("expected attribute name", name.pos)
                return AttrRef(low, name.text)
            return AttrRef(None, t.text)
        if t.kind == "op" and t.text == "(":
            inner = self.expression(0)
            close = self.advance()
            if close.text != ")":
                raise ExpressionSyntaxError("expected ')'", close.pos)
            return inner
        if t.kind == "eof":
            raise ExpressionSyntaxError("unexpected end of expression", t.pos)
        raise ExpressionSyntaxError(f"unexpected {t.text!r}", t.pos)


def parse_expression(text: str) -> Expression:
    return _Parser(text).parse()


# -- printer ----------------------------------------------------------------

def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t").replace("\r", "\\r") + '"'


def format_value(v: Value) -> str:
    if v is UNDEFINED:
        return "undefined"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return _quote(v)
    return repr(v)


def to_text(expr: Expression) -> str:
    """Canonical, fully parenthesised rendering that parses back to ``expr``."""
    if isinstance(expr, Literal):
        return format_value(expr.value)
    if isinstance(expr, AttrRef):
        return f"{expr.scope}.{expr.name}" if expr.scope else expr.name
    if isinstance(expr, Unary):
        return f"({expr.op}{to_text(expr.operand)})"
    return f"({to_text(expr.left)} {expr.op} {to_text(expr.right)})"


# -- evaluator --------------------------------------------------------------

MAX_DEPTH = 32


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _arith(op: str, a, b) -> Value:
    if not (_is_num(a) and _is_num(b)):
        return UNDEFINED
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if b == 0:
        return UNDEFINED
    if isinstance(a, int) and isinstance(b, int):
        q = abs(a) // abs(b)
        return q if (a >= 0) == (b >= 0) else -q
    return a / b


_COMPARE = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def _compare(op: str, a, b) -> Value:
    if _is_num(a) and _is_num(b):
        return _COMPARE[op](a, b)
    if isinstance(a, str) and isinstance(b, str):
        return _COMPARE[op](a, b)
    if isinstance(a, bool) and isinstance(b, bool) and op in ("==", "!="):
        return _COMPARE[op](a, b)
    return UNDEFINED


def _lookup(ad: "Ad | None", other: "Ad | None", name: str, depth: int) -> Value:
    if ad is None or name not in ad:
        return UNDEFINED
    raw = ad[name]
    if isinstance(raw, (Literal, AttrRef, Unary, Binary)):
        return _eval(raw, ad, other, depth + 1)
    return raw


def _eval(expr: Expression, my, other, depth: int) -> Value:
    if depth > MAX_DEPTH:
        return UNDEFINED
    if isinstance(expr, Literal):
        return expr.value
    if isinstance(expr, AttrRef):
        if expr.scope == "my":
            return _lookup(my, other, expr.name, depth)
        if expr.scope == "other":
            return _lookup(other, my, expr.name, depth)
        if my is not None and expr.name in my:
            return _lookup(my, other, expr.name, depth)
        return _lookup(other, my, expr.name, depth)
    if isinstance(expr, Unary):
        v = _eval(expr.operand, my, other, depth)
        if expr.op == "!":
            return (not v) if isinstance(v, bool) else UNDEFINED
        return -v if _is_num(v) else UNDEFINED
    op = expr.op
    if op == "&&":
        left = _eval(expr.left, my, other, depth)
        if left is False:
            return False
        if left is not True:
            return UNDEFINED
        right = _eval(expr.right, my, other, depth)
        return right if isinstance(right, bool) else UNDEFINED
    if op == "||":
        left = _eval(expr.left, my, other, depth)
        if left is True:
            return True
        if left is not False:
            return UNDEFINED
        right = _eval(expr.right, my, other, depth)
        return right if isinstance(right, bool) else UNDEFINED
    a = _eval(expr.left, my, other, depth)
    b = _eval(expr.right, my, other, depth)
    if op in _COMPARE:
        return _compare(op, a, b)
    try:
        return _arith(op, a, b)
    except (OverflowError, ArithmeticError):
        return UNDEFINED


def evaluate(expr: Expression | str, my: "Ad | None" = None, other: "Ad | None" = None) -> Value:
    if isinstance(expr, str):
        expr = parse_expression(expr)
    try:
        return _eval(expr, my, other, 0)
    except RecursionError:
        return UNDEFINED
