"""Holomorphic expressions in the two complex variables ``s`` and ``z``.

Expressions are immutable trees built from :class:`Const`, :class:`Var`,
:class:`Unary` and :class:`Binary` nodes.  They are produced by :func:`parse`,
printed back with ``str()``, evaluated with :func:`evaluate` and
differentiated with :func:`diff`.

Grammar (whitespace-insensitive)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?          # right-associative
    primary := NUMBER | NUMBER 'i' | 'i' | 'pi' | 's' | 'z'
             | FUNC '(' expr ')' | '(' expr ')'
    FUNC    := exp | log | sin | cos | sqrt

A minus sign directly in front of a bare numeric literal (not the base of a
power) is folded into a negative constant, so ``-2*z`` is ``Mul(-2, z)`` and
``-2^z`` is ``Neg(Pow(2, z))``.

Evaluation uses double-precision complex arithmetic with principal branches
for ``log``, ``sqrt`` and non-integer powers (``a^w = exp(w*log(a))``).  Every
intermediate is checked: a magnitude above ``1e150`` (or a non-finite value)
raises :class:`Overflow` and a divisor smaller than ``1e-300`` in magnitude
raises :class:`DivisionNearZero`.
"""

from __future__ import annotations

import cmath
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Union

import numpy as np

from .errors import DivisionNearZero, Overflow, ParseError, UnknownIdentifier

OVERFLOW_LIMIT = 1e150
DIVISOR_FLOOR = 1e-300

FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt")
VARIABLES = ("s", "z")
NAMED_CONSTANTS = {"i": 1j, "pi": complex(math.pi)}


@dataclass(frozen=True)
class Const:
    value: complex

    def __post_init__(self):
        object.__setattr__(self, "value", complex(self.value))

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Unary:
    op: str  # 'neg' or a name from FUNCTIONS
    arg: "Expr"

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True)
class Binary:
    op: str  # 'add', 'sub', 'mul', 'div', 'pow'
    left: "Expr"
    right: "Expr"

    def __str__(self):
        return to_text(self)


Expr = Union[Const, Var, Unary, Binary]

ZERO = Const(0)
ONE = Const(1)
S = Var("s")
Z = Var("z")


# ---------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?(?P<imag>i(?![A-Za-z0-9_]))?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass
class _Token:
    kind: str  # 'number', 'ident', 'op', 'end'
    text: str
    offset: int  # byte offset into the UTF-8 encoding
    value: complex = 0j


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    byte_pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", byte_pos,
                             ("number", "identifier", "operator"))
        kind = m.lastgroup if m.lastgroup != "imag" else "number"
        piece = m.group()
        if kind != "ws":
            tok = _Token(kind, piece, byte_pos)
            if kind == "number":
                if m.group("imag"):
                    tok.value = complex(0, float(piece[:-1]))
                else:
                    tok.value = complex(float(piece))
            tokens.append(tok)
        byte_pos += len(piece.encode("utf-8"))
        pos = m.end()
    tokens.append(_Token("end", "", byte_pos))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def _peek(self, k=1) -> _Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def _is_op(self, *ops) -> bool:
        return self.tok.kind == "op" and self.tok.text in ops

    def _expect_op(self, op):
        if not self._is_op(op):
            self._fail(f"expected {op!r}", (op,))
        self.i += 1

    def _fail(self, message, expected):
        found = self.tok.text or "end of input"
        raise ParseError(f"{message}, found {found!r}", self.tok.offset, expected)

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            self._fail("unexpected token", ("+", "-", "*", "/", "^", "end of input"))
        return e

    def expr(self) -> Expr:
        node = self.term()
        while self._is_op("+", "-"):
            op = "add" if self.tok.text == "+" else "sub"
            self.i += 1
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self._is_op("*", "/"):
            op = "mul" if self.tok.text == "*" else "div"
            self.i += 1
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self._is_op("-"):
            self.i += 1
            nxt = self._peek()
            if self.tok.kind == "number" and not (nxt.kind == "op" and nxt.text == "^"):
                value = self.tok.value
                self.i += 1
                return Const(-value)
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self._is_op("^"):
            self.i += 1
            return Binary("pow", base, self.unary())
        return base

    def primary(self) -> Expr:
        tok = self.tok
        if tok.kind == "number":
            self.i += 1
            return Const(tok.value)
        if tok.kind == "ident":
            self.i += 1
            name = tok.text
            if name in VARIABLES:
                return Var(name)
            if name in NAMED_CONSTANTS:
                return Const(NAMED_CONSTANTS[name])
            if name in FUNCTIONS:
                self._expect_op("(")
                arg = self.expr()
                self._expect_op(")")
                return Unary(name, arg)
            raise UnknownIdentifier(name, tok.offset)
        if self._is_op("("):
            self.i += 1
            e = self.expr()
            self._expect_op(")")
            return e
        self._fail("expected an operand",
                   ("number", "s", "z", "i", "pi", "(", "-") + FUNCTIONS)


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    Raises :class:`ParseError` (with byte offset and expected tokens) on
    malformed input and :class:`UnknownIdentifier` for names other than
    ``s``, ``z``, ``i``, ``pi`` or a known function.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    return _Parser(text).parse()


def as_expr(e: Union[Expr, str]) -> Expr:
    return parse(e) if isinstance(e, str) else e


# ---------------------------------------------------------------------------
# Printing

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}
_ATOM = 5
_SYMBOL = {"add": " + ", "sub": " - ", "mul": "*", "div": "/", "pow": "^"}


def _fmt_real(x: float) -> str:
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x)) if x != 0 or math.copysign(1, x) > 0 else "-0"
    return repr(x)


def _const_text(c: complex) -> tuple[str, int, bool]:
    """Return (text, precedence, is_bare_literal) for a constant."""
    re_, im = c.real, c.imag
    if c == 1j:
        return "i", _ATOM, False
    if im == 0 and re_ == math.pi:
        return "pi", _ATOM, False
    if im == 0:
        text = _fmt_real(re_)
        return text, (3 if text.startswith("-") else _ATOM), not text.startswith("-")
    if re_ == 0 and math.copysign(1, re_) > 0:
        text = _fmt_real(im) + "i"
        return text, (3 if text.startswith("-") else _ATOM), not text.startswith("-")
    # General complex constants only arise from constant folding; they print
    # readably but do not re-parse to a single node.
    sign = "-" if im < 0 else "+"
    return f"({_fmt_real(re_)} {sign} {_fmt_real(abs(im))}i)", _ATOM, False


def _render(e: Expr) -> tuple[str, int, bool]:
    if isinstance(e, Const):
        return _const_text(e.value)
    if isinstance(e, Var):
        return e.name, _ATOM, False
    if isinstance(e, Unary):
        inner, prec, bare = _render(e.arg)
        if e.op != "neg":
            return f"{e.op}({inner})", _ATOM, False
        if prec < 3 or bare:
            inner = f"({inner})"
        return "-" + inner, 3, False
    op = e.op
    p = _PREC[op]
    left, lp, _ = _render(e.left)
    right, rp, _ = _render(e.right)
    if op == "pow":
        if lp <= p:
            left = f"({left})"
        if rp < 3:
            right = f"({right})"
    else:
        if lp < p:
            left = f"({left})"
        if rp <= p:
            right = f"({right})"
    return f"{left}{_SYMBOL[op]}{right}", p, False


def to_text(e: Expr) -> str:
    """Render ``e`` in the input grammar; ``parse(to_text(e)) == e`` for parsed trees."""
    return _render(e)[0]


# ---------------------------------------------------------------------------
# Evaluation

def _overflow():
    raise Overflow()


def _small_int(w):
    # exponents that evaluate to a small integer use exact repeated multiplication
    if w.imag == 0 and w.real.is_integer() and abs(w.real) <= 64:
        return int(w.real)
    return None


def _cpow(a, w):
    if a == 0:
        if w.real > 0:
            return 0j
        raise DivisionNearZero("zero base with non-positive exponent")
    k = _small_int(complex(w))
    if k is not None and k >= 0:
        return complex(a) ** k
    if k is not None:
        q = complex(a) ** -k
        if abs(q) < DIVISOR_FLOOR:
            raise DivisionNearZero()
        return 1 / q
    return cmath.exp(w * cmath.log(a))


def _int_exponent(e: Expr):
    if isinstance(e, Const) and e.value.imag == 0 and e.value.real.is_integer() \
            and abs(e.value.real) <= 64:
        return int(e.value.real)
    return None


class _CodeGen:
    """Lower an expression to straight-line Python with checks after every node."""

    def __init__(self, array: bool):
        self.array = array
        self.lines: list[str] = []
        self.consts: dict[str, object] = {}
        self.count = 0
        self.seen: dict = {}

    def _tmp(self) -> str:
        self.count += 1
        return f"t{self.count}"

    def _const(self, value) -> str:
        name = f"c{len(self.consts)}"
        self.consts[name] = value
        return name

    def _check(self, name):
        if self.array:
            self.lines.append(f"if not (_abs({name}) <= LIM).all(): _ovf()")
        else:
            self.lines.append(f"if not abs({name}) <= LIM: _ovf()")

    def _div_check(self, name):
        if self.array:
            self.lines.append(f"if (_abs({name}) < TINY).any(): _dnz()")
        else:
            self.lines.append(f"if abs({name}) < TINY: _dnz()")

    def emit(self, e: Expr) -> str:
        if isinstance(e, Const):
            return self._const(e.value)
        if isinstance(e, Var):
            return e.name
        # repeated subtrees are computed once; results are identical either way
        if e not in self.seen:
            self.seen[e] = self._emit_node(e)
        return self.seen[e]

    def _emit_node(self, e: Expr) -> str:
        t = self._tmp()
        if isinstance(e, Unary):
            a = self.emit(e.arg)
            if e.op == "neg":
                self.lines.append(f"{t} = -{a}")
            else:
                self.lines.append(f"{t} = F_{e.op}({a})")
            self._check(t)
            return t
        a = self.emit(e.left)
        if e.op == "pow":
            n = _int_exponent(e.right)
            if n is not None and n >= 0:
                self.lines.append(f"{t} = {a} ** {n}")
            elif n is not None:
                q = self._tmp()
                self.lines.append(f"{q} = {a} ** {-n}")
                self._check(q)
                self._div_check(q)
                self.lines.append(f"{t} = 1 / {q}")
            else:
                w = self.emit(e.right)
                self.lines.append(f"{t} = F_pow({a}, {w})")
            self._check(t)
            return t
        b = self.emit(e.right)
        if e.op == "div":
            self._div_check(b)
        sym = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[e.op]
        self.lines.append(f"{t} = {a} {sym} {b}")
        self._check(t)
        return t


def _array_pow(a, w):
    a = np.asarray(a, dtype=complex)
    zero = a == 0
    if np.any(zero & ~(np.real(w) > 0)):
        raise DivisionNearZero("zero base with non-positive exponent")
    safe = np.where(zero, 1, a)
    if np.ndim(w) == 0:
        k = _small_int(complex(w))
        if k is not None:
            return np.where(zero, 0, safe ** k)
    return np.where(zero, 0, np.exp(w * np.log(safe)))


def _array_dnz():
    raise DivisionNearZero()


_SCALAR_ENV = {
    "F_exp": cmath.exp, "F_log": cmath.log, "F_sin": cmath.sin,
    "F_cos": cmath.cos, "F_sqrt": cmath.sqrt, "F_pow": _cpow,
}
_ARRAY_ENV = {
    "F_exp": np.exp, "F_log": np.log, "F_sin": np.sin,
    "F_cos": np.cos, "F_sqrt": np.sqrt, "F_pow": _array_pow, "_abs": np.abs,
}


def _build(e: Expr, array: bool):
    gen = _CodeGen(array)
    result = gen.emit(e)
    body = "\n".join("        " + line for line in gen.lines)
    if array:
        src = (
            "def _f(s, z):\n"
            "    s = _asarray(s, dtype=complex)\n"
            "    z = _asarray(z, dtype=complex)\n"
            "    with _errstate(all='ignore'):\n"
            f"{body}\n"
            f"        r = {result} + _zeros(_bshape(s, z).shape, complex)\n"
            "        if not (_abs(r) <= LIM).all(): _ovf()\n"
            "    return r\n"
        )
    else:
        src = (
            "def _f(s, z):\n"
            "    try:\n"
            f"{body}\n"
            "        pass\n"
            "    except OverflowError:\n"
            "        _ovf()\n"
            "    except ValueError:\n"
            "        _ovf()\n"
            "    except ZeroDivisionError:\n"
            "        _dnz()\n"
            f"    return complex({result})\n"
        )
    env = dict(_ARRAY_ENV if array else _SCALAR_ENV)
    env.update(gen.consts)
    env.update(LIM=OVERFLOW_LIMIT, TINY=DIVISOR_FLOOR, _ovf=_overflow, _dnz=_array_dnz,
               _asarray=np.asarray, _errstate=np.errstate, _zeros=np.zeros,
               _bshape=np.broadcast)
    exec(compile(src, f"<expr {to_text(e)}>", "exec"), env)
    return env["_f"]


@lru_cache(maxsize=512)
def compile_scalar(e: Expr) -> Callable[[complex, complex], complex]:
    """Compile ``e`` to a fast ``fn(s, z) -> complex`` with all range checks."""
    return _build(e, array=False)


@lru_cache(maxsize=512)
def compile_array(e: Expr) -> Callable:
    """Compile ``e`` to a numpy-vectorised ``fn(S, Z) -> ndarray`` (broadcasting)."""
    return _build(e, array=True)


def evaluate(e: Union[Expr, str], s: complex, z: complex) -> complex:
    """Evaluate ``e`` at ``(s, z)``; deterministic, bit-identical on repeated calls."""
    return compile_scalar(as_expr(e))(complex(s), complex(z))


_INTERP_FUNCS = {"exp": cmath.exp, "log": cmath.log, "sin": cmath.sin,
                 "cos": cmath.cos, "sqrt": cmath.sqrt}


def interpret(e: Expr, s: complex, z: complex) -> complex:
    """Reference tree-walking evaluator (slow, same arithmetic as :func:`evaluate`)."""

    def chk(v):
        if not abs(v) <= OVERFLOW_LIMIT:
            raise Overflow()
        return v

    def go(n):
        if isinstance(n, Const):
            return n.value
        if isinstance(n, Var):
            return s if n.name == "s" else z
        if isinstance(n, Unary):
            a = go(n.arg)
            if n.op == "neg":
                return chk(-a)
            try:
                return chk(_INTERP_FUNCS[n.op](a))
            except (OverflowError, ValueError):
                raise Overflow() from None
        a = go(n.left)
        if n.op == "pow":
            k = _int_exponent(n.right)
            if k is not None and k >= 0:
                return chk(a ** k)
            if k is not None:
                q = chk(a ** -k)
                if abs(q) < DIVISOR_FLOOR:
                    raise DivisionNearZero()
                return chk(1 / q)
            w = go(n.right)
            try:
                return chk(_cpow(a, w))
            except OverflowError:
                raise Overflow() from None
        b = go(n.right)
        if n.op == "add":
            return chk(a + b)
        if n.op == "sub":
            return chk(a - b)
        if n.op == "mul":
            return chk(a * b)
        if abs(b) < DIVISOR_FLOOR:
            raise DivisionNearZero()
        return chk(a / b)

    return complex(go(e))


# ---------------------------------------------------------------------------
# Structure queries and symbolic differentiation

def free_vars(e: Expr) -> frozenset:
    if isinstance(e, Var):
        return frozenset({e.name})
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, Unary):
        return free_vars(e.arg)
    return free_vars(e.left) | free_vars(e.right)


def _is(e, value) -> bool:
    return isinstance(e, Const) and e.value == value


def _fold(e: Expr) -> Expr:
    try:
        return Const(interpret(e, 0j, 0j))
    except (Overflow, DivisionNearZero):
        return e


def mk_add(a: Expr, b: Expr) -> Expr:
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    e = Binary("add", a, b)
    return _fold(e) if isinstance(a, Const) and isinstance(b, Const) else e


def mk_sub(a: Expr, b: Expr) -> Expr:
    if _is(b, 0):
        return a
    if _is(a, 0):
        return mk_neg(b)
    e = Binary("sub", a, b)
    return _fold(e) if isinstance(a, Const) and isinstance(b, Const) else e


def mk_mul(a: Expr, b: Expr) -> Expr:
    if _is(a, 0) or _is(b, 0):
        return ZERO
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    e = Binary("mul", a, b)
    return _fold(e) if isinstance(a, Const) and isinstance(b, Const) else e


def mk_div(a: Expr, b: Expr) -> Expr:
    if _is(b, 1):
        return a
    if _is(a, 0) and not _is(b, 0):
        return ZERO
    e = Binary("div", a, b)
    return _fold(e) if isinstance(a, Const) and isinstance(b, Const) else e


def mk_pow(a: Expr, b: Expr) -> Expr:
    if _is(b, 0):
        return ONE
    if _is(b, 1):
        return a
    e = Binary("pow", a, b)
    return _fold(e) if isinstance(a, Const) and isinstance(b, Const) else e


def mk_neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    return Unary("neg", a)


def mk_func(name: str, a: Expr) -> Expr:
    e = Unary(name, a)
    return _fold(e) if isinstance(a, Const) else e


def diff(e: Union[Expr, str], var: str) -> Expr:
    """Symbolic derivative of ``e`` with respect to ``var`` ('s' or 'z').

    The result is simplified only by constant folding and zero/one
    elimination, e.g. ``diff(parse("z + exp(s*z)"), "z")`` prints as
    ``1 + s*exp(s*z)``.
    """
    if var not in VARIABLES:
        raise ValueError(f"can only differentiate with respect to s or z, not {var!r}")
    e = as_expr(e)

    def d(n: Expr) -> Expr:
        if isinstance(n, Const):
            return ZERO
        if isinstance(n, Var):
            return ONE if n.name == var else ZERO
        if isinstance(n, Unary):
            a, da = n.arg, d(n.arg)
            if n.op == "neg":
                return mk_neg(da)
            if n.op == "exp":
                return mk_mul(da, n)
            if n.op == "log":
                return mk_div(da, a)
            if n.op == "sin":
                return mk_mul(da, mk_func("cos", a))
            if n.op == "cos":
                return mk_neg(mk_mul(da, mk_func("sin", a)))
            if n.op == "sqrt":
                return mk_div(da, mk_mul(Const(2), n))
            raise AssertionError(n.op)
        a, b = n.left, n.right
        da, db = d(a), d(b)
        if n.op == "add":
            return mk_add(da, db)
        if n.op == "sub":
            return mk_sub(da, db)
        if n.op == "mul":
            return mk_add(mk_mul(da, b), mk_mul(a, db))
        if n.op == "div":
            return mk_div(mk_sub(mk_mul(da, b), mk_mul(a, db)), mk_pow(b, Const(2)))
        # pow
        if isinstance(b, Const):
            return mk_mul(mk_mul(b, mk_pow(a, Const(b.value - 1))), da)
        return mk_mul(n, mk_add(mk_mul(db, mk_func("log", a)), mk_div(mk_mul(b, da), a)))

    return d(e)


def increment_expr(f: Union[Expr, str]) -> Expr:
    """Recover ``q`` from ``f = z + q`` syntactically (``f - z`` otherwise)."""
    f = as_expr(f)
    if isinstance(f, Binary) and f.op == "add":
        # peel the leftmost bare z from a left-leaning chain of additions
        if f.left == Z:
            return f.right
        if f.right == Z:
            return f.left
        inner = f.left
        if isinstance(inner, Binary) and inner.op == "add":
            q = increment_expr(inner)
            if not (isinstance(q, Binary) and q.op == "sub" and q.right == Z):
                return mk_add(q, f.right)
    if f == Z:
        return ZERO
    return mk_sub(f, Z)
