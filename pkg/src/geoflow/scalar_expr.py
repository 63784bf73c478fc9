"""Expression language for scalar fields of ``(t, q1..qn, dq1..dqn)``.

Grammar, loosest binding first::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?            # right associative
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Names are the variables ``t``, ``q1``..``qn``, ``dq1``..``dqn``, the functions
``sin cos exp log sqrt abs``, the built-in constant ``pi`` and whatever named
constants the caller passes in; constants are folded into the tree at parse
time.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence, Union

from .errors import EvaluationError, ParseError, UnknownIdentifierError

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "abs")
BUILTIN_CONSTANTS = {"pi": math.pi}


# ---------------------------------------------------------------------------
# tree


@dataclass(frozen=True)
class Const:
    value: float

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" or one of FUNCTIONS
    arg: "Expr"

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True)
class Binary:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"

    def __str__(self):
        return to_string(self)


Expr = Union[Const, Var, Unary, Binary]

ZERO = Const(0.0)
ONE = Const(1.0)


def Neg(e):
    return Unary("neg", e)


def Add(a, b):
    return Binary("+", a, b)


def Sub(a, b):
    return Binary("-", a, b)


def Mul(a, b):
    return Binary("*", a, b)


def Div(a, b):
    return Binary("/", a, b)


def Pow(a, b):
    return Binary("^", a, b)


def var_name(kind: str, index: int) -> str:
    """``var_name('q', 0) == 't'``; spatial and velocity indices start at 1."""
    if kind == "q":
        return "t" if index == 0 else f"q{index}"
    if kind == "dq":
        if index < 1:
            raise ValueError("velocity variables are indexed from 1")
        return f"dq{index}"
    raise ValueError(f"unknown variable kind {kind!r}")


_VAR_RE = re.compile(r"^(d?q)([0-9]+)$")


def split_var(name: str) -> tuple[str, int]:
    """Inverse of :func:`var_name`."""
    if name == "t":
        return "q", 0
    m = _VAR_RE.match(name)
    if not m or m.group(2).startswith("0"):
        raise ValueError(f"not a variable name: {name!r}")
    return m.group(1), int(m.group(2))


# ---------------------------------------------------------------------------
# tokenizer / parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))"
)


@dataclass
class _Tok:
    kind: str  # num, name, op, end
    text: str
    pos: int  # character offset


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(
                f"unexpected character {text[start]!r}",
                text,
                _byte_offset(text, start),
                {"number", "name", "operator"},
            )
        kind = m.lastgroup
        toks.append(_Tok(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    toks.append(_Tok("end", "", len(text)))
    return toks


def _byte_offset(text: str, char_pos: int) -> int:
    return len(text[:char_pos].encode("utf-8"))


class _Parser:
    def __init__(self, text, n, constants):
        self.text = text
        self.n = n
        self.constants = dict(BUILTIN_CONSTANTS)
        self.constants.update(constants or {})
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def fail(self, message, expected, tok=None, cls=ParseError):
        tok = tok or self.tok
        raise cls(message, self.text, _byte_offset(self.text, tok.pos), expected)

    def take_op(self, ops):
        if self.tok.kind == "op" and self.tok.text in ops:
            t = self.tok
            self.i += 1
            return t.text
        return None

    def parse(self):
        if self.tok.kind == "end":
            self.fail("empty expression", {"number", "name", "(", "-"})
        e = self.expr()
        if self.tok.kind != "end":
            self.fail(f"unexpected token {self.tok.text!r}", {"+", "-", "*", "/", "^", "end of input"})
        return e

    def expr(self):
        e = self.term()
        while True:
            op = self.take_op("+-")
            if op is None:
                return e
            e = Binary(op, e, self.term())

    def term(self):
        e = self.unary()
        while True:
            op = self.take_op("*/")
            if op is None:
                return e
            e = Binary(op, e, self.unary())

    def unary(self):
        if self.take_op("-"):
            return Neg(self.unary())
        if self.take_op("+"):
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.take_op("^"):
            return Pow(base, self.unary())
        return base

    def atom(self):
        tok = self.tok
        expected = {"number", "name", "(", "-"}
        if tok.kind == "num":
            self.i += 1
            return Const(float(tok.text))
        if tok.kind == "op" and tok.text == "(":
            self.i += 1
            e = self.expr()
            if not self.take_op(")"):
                self.fail("unbalanced parenthesis", {")", "+", "-", "*", "/", "^"})
            return e
        if tok.kind == "name":
            self.i += 1
            name = tok.text
            if name in FUNCTIONS:
                if not self.take_op("("):
                    self.fail(f"function {name!r} needs an argument list", {"("})
                arg = self.expr()
                if not self.take_op(")"):
                    self.fail("unbalanced parenthesis", {")", "+", "-", "*", "/", "^"})
                return Unary(name, arg)
            if self.tok.kind == "op" and self.tok.text == "(":
                self.fail(f"{name!r} is not a function", set(FUNCTIONS), tok, UnknownIdentifierError)
            if name in self.constants:
                return Const(float(self.constants[name]))
            try:
                kind, idx = split_var(name)
            except ValueError:
                self.fail(f"unknown identifier {name!r}", expected, tok, UnknownIdentifierError)
            if kind == "q" and name != "t" and idx == 0:
                self.fail("q0 is reserved; use t", expected, tok)
            if idx > self.n:
                self.fail(f"variable {name!r} out of range for n={self.n}", expected, tok, UnknownIdentifierError)
            return Var(name)
        if tok.kind == "end":
            self.fail("unexpected end of input", expected)
        self.fail(f"unexpected token {tok.text!r}", expected)


def parse(text: str, n: int, constants: Mapping[str, float] | None = None) -> Expr:
    """Parse ``text`` into an expression over ``t, q1..qn, dq1..dqn``."""
    if not isinstance(text, str):
        # numbers in config files arrive as int/float
        if isinstance(text, (int, float)) and not isinstance(text, bool):
            return Const(float(text))
        raise ParseError(f"expected a string, got {type(text).__name__}", "", 0)
    return _Parser(text, n, constants).parse()


# ---------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _fmt_const(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        s = str(int(v))
    else:
        s = repr(v)
    return f"({s})" if v < 0 or s.startswith("-") else s


def _prec(e) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary) and e.op == "neg":
        return 3
    if isinstance(e, Const) and e.value < 0:
        return 5
    return 5


def to_string(e: Expr) -> str:
    """Render with the minimum parentheses needed to re-parse the same tree."""
    if isinstance(e, Const):
        return _fmt_const(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = to_string(e.arg)
            return "-" + (inner if _prec(e.arg) >= 3 else f"({inner})")
        return f"{e.op}({to_string(e.arg)})"
    p = _PREC[e.op]
    left, right = to_string(e.left), to_string(e.right)
    if e.op == "^":
        if _prec(e.left) <= 4:
            left = f"({left})"
        if _prec(e.right) < 3:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left}{e.op}{right}" if p == 2 else f"{left} {e.op} {right}"


# ---------------------------------------------------------------------------
# evaluation

_UNARY_FUNCS: dict[str, Callable[[float], float]] = {
    "neg": lambda x: -x,
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "abs": abs,
}


def _binop(op, a, b):
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    return math.pow(a, b)


def _eval(e, b):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return b[e.name]
    if isinstance(e, Unary):
        return _UNARY_FUNCS[e.op](_eval(e.arg, b))
    return _binop(e.op, _eval(e.left, b), _eval(e.right, b))


def evaluate(e: Expr, bindings: Mapping[str, float]) -> float:
    """Evaluate ``e`` in IEEE double precision.

    Raises EvaluationError on domain errors, division by zero, unbound
    variables, or a non-finite result.
    """
    b = {k: float(v) for k, v in bindings.items()}
    try:
        val = _eval(e, b)
    except KeyError as exc:
        raise EvaluationError(f"unbound variable {exc.args[0]!r}", b) from None
    except (ValueError, ZeroDivisionError, OverflowError) as exc:
        raise EvaluationError(f"{type(exc).__name__}: {exc}", b) from None
    if not math.isfinite(val):
        raise EvaluationError("non-finite value", b)
    return val


def free_vars(e: Expr) -> frozenset[str]:
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Unary):
        return free_vars(e.arg)
    return free_vars(e.left) | free_vars(e.right)


def mentions_velocity(e: Expr) -> bool:
    return any(v.startswith("dq") for v in free_vars(e))


def _src(e) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        kind, idx = split_var(e.name)
        return f"x[{idx}]" if kind == "q" else f"v[{idx - 1}]"
    if isinstance(e, Unary):
        return f"_{e.op}({_src(e.arg)})"
    if e.op == "^":
        return f"_pow({_src(e.left)}, {_src(e.right)})"
    return f"({_src(e.left)} {e.op} {_src(e.right)})"


_NAMESPACE = {f"_{k}": f for k, f in _UNARY_FUNCS.items()}
_NAMESPACE["_pow"] = math.pow


def compile_exprs(exprs: Sequence[Expr]) -> Callable[[Sequence[float], Sequence[float]], tuple]:
    """Compile to ``f(x, v) -> tuple`` with ``x = [t, q1..]`` and ``v = [dq1..]``.

    The compiled function performs the same floating point operations in the
    same order as :func:`evaluate`; callers must pass Python floats and handle
    the arithmetic exceptions themselves.
    """
    body = ", ".join(_src(e) for e in exprs)
    src = f"def _f(x, v):\n    return ({body},)\n"
    ns = dict(_NAMESPACE)
    exec(compile(src, "<geoflow-expr>", "exec"), ns)
    return ns["_f"]


# ---------------------------------------------------------------------------
# construction with light simplification


def _c(e) -> Expr:
    return Const(float(e)) if isinstance(e, (int, float)) else e


def _is(e, v):
    return isinstance(e, Const) and e.value == v


def add(a, b) -> Expr:
    a, b = _c(a), _c(b)
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Add(a, b)


def sub(a, b) -> Expr:
    a, b = _c(a), _c(b)
    if _is(b, 0):
        return a
    if _is(a, 0):
        return neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return Sub(a, b)


def mul(a, b) -> Expr:
    a, b = _c(a), _c(b)
    if _is(a, 0) or _is(b, 0):
        return ZERO
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return Mul(a, b)


def div(a, b) -> Expr:
    a, b = _c(a), _c(b)
    if _is(a, 0):
        return ZERO
    if _is(b, 1):
        return a
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0:
        return Const(a.value / b.value)
    return Div(a, b)


def neg(a) -> Expr:
    a = _c(a)
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Neg(a)


def power(a, b) -> Expr:
    a, b = _c(a), _c(b)
    if _is(b, 0):
        return ONE
    if _is(b, 1):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        try:
            return Const(math.pow(a.value, b.value))
        except (ValueError, OverflowError, ZeroDivisionError):
            pass
    return Pow(a, b)


def func(name: str, a) -> Expr:
    a = _c(a)
    if name not in FUNCTIONS:
        raise ValueError(f"unknown function {name!r}")
    return Unary(name, a)


# ---------------------------------------------------------------------------
# calculus and substitution


def differentiate(e: Expr, var: str) -> Expr:
    """Exact symbolic derivative of ``e`` with respect to variable ``var``."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, Unary):
        u = e.arg
        du = differentiate(u, var)
        if _is(du, 0):
            return ZERO
        if e.op == "neg":
            return neg(du)
        if e.op == "sin":
            return mul(func("cos", u), du)
        if e.op == "cos":
            return mul(neg(func("sin", u)), du)
        if e.op == "exp":
            return mul(e, du)
        if e.op == "log":
            return div(du, u)
        if e.op == "sqrt":
            return div(du, mul(2, e))
        if e.op == "abs":
            return mul(div(u, e), du)
        raise AssertionError(e.op)
    a, b = e.left, e.right
    da, db = differentiate(a, var), differentiate(b, var)
    if e.op == "+":
        return add(da, db)
    if e.op == "-":
        return sub(da, db)
    if e.op == "*":
        return add(mul(da, b), mul(a, db))
    if e.op == "/":
        if _is(db, 0):
            return div(da, b)
        return div(sub(mul(da, b), mul(a, db)), power(b, 2))
    # power
    if _is(db, 0):
        return mul(mul(b, power(a, sub(b, 1))), da)
    return mul(e, add(mul(db, func("log", a)), div(mul(b, da), a)))


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (simultaneously)."""
    if isinstance(e, Const):
        return e
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Unary):
        return Unary(e.op, substitute(e.arg, mapping))
    return Binary(e.op, substitute(e.left, mapping), substitute(e.right, mapping))


def variables(n: int, velocities: bool = True) -> list[str]:
    names = ["t"] + [f"q{i}" for i in range(1, n + 1)]
    if velocities:
        names += [f"dq{i}" for i in range(1, n + 1)]
    return names


def check_dimension(e: Expr, n: int) -> None:
    for name in free_vars(e):
        _, idx = split_var(name)
        if idx > n:
            raise ValueError(f"variable {name!r} out of range for n={n}")


def parse_many(texts: Iterable, n: int, constants=None) -> list[Expr]:
    return [parse(t, n, constants) for t in texts]
