"""Scalar expression trees over state variables x1..xn.

Expressions are immutable, hashable trees.  They are built either by
:func:`parse_expr` or with the ordinary Python operators, differentiated
symbolically with :func:`diff_expr`, and evaluated either pointwise
(:func:`eval_expr`) or over a batch of points through a compiled
numpy kernel (:func:`compile_batch`).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Expr", "Const", "Var", "Neg", "Add", "Sub", "Mul", "Div", "Pow", "Func",
    "VectorField", "ParseError", "DomainError", "FUNCTIONS",
    "parse_expr", "eval_expr", "diff_expr", "divergence", "fd_divergence",
    "gradient", "compile_batch", "compile_scalar", "as_expr", "variables",
]

FUNCTIONS = ("sqrt", "exp", "ln", "sin", "cos", "abs")


class ParseError(ValueError):
    """Syntax error in an expression string; ``offset`` is a byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class DomainError(ArithmeticError):
    """Evaluation left the real domain (division by zero, ln of x <= 0, ...)."""

    def __init__(self, message, point=None):
        if point is not None:
            message = f"{message} at x = {tuple(float(v) for v in point)}"
        super().__init__(message)
        self.point = None if point is None else tuple(float(v) for v in point)


# ---------------------------------------------------------------------------
# AST

class Expr:
    """Base class of expression nodes."""

    __slots__ = ()

    # precedence used by the printer: higher binds tighter
    prec = 100

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __pow__(self, other):
        return power(self, as_expr(other))

    def __neg__(self):
        return neg(self)

    def __str__(self):
        return to_text(self)

    @property
    def max_var(self) -> int:
        """Largest variable index referenced (0 for constant expressions)."""
        return max((v.index for v in _walk(self) if isinstance(v, Var)), default=0)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))

    def __repr__(self):
        return f"Const({self.value!r})"


@dataclass(frozen=True, eq=True)
class Var(Expr):
    index: int  # 1-based

    def __repr__(self):
        return f"Var({self.index})"


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr
    prec = 3


class _Binary(Expr):
    __slots__ = ("left", "right", "_hash")
    symbol = "?"

    def __init__(self, left: Expr, right: Expr):
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        object.__setattr__(self, "_hash", hash((type(self).__name__, left, right)))

    def __setattr__(self, name, value):
        raise AttributeError("expressions are immutable")

    def __eq__(self, other):
        return (type(self) is type(other) and self._hash == other._hash
                and self.left == other.left and self.right == other.right)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"{type(self).__name__}({self.left!r}, {self.right!r})"


class Add(_Binary):
    __slots__ = ()
    prec = 1
    symbol = "+"


class Sub(_Binary):
    __slots__ = ()
    prec = 1
    symbol = "-"


class Mul(_Binary):
    __slots__ = ()
    prec = 2
    symbol = "*"


class Div(_Binary):
    __slots__ = ()
    prec = 2
    symbol = "/"


class Pow(_Binary):
    __slots__ = ()
    prec = 4
    symbol = "^"


@dataclass(frozen=True, eq=True)
class Func(Expr):
    name: str
    arg: Expr

    def __post_init__(self):
        if self.name not in FUNCTIONS:
            raise ValueError(f"unknown function {self.name!r}")


ZERO = Const(0.0)
ONE = Const(1.0)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Const(float(value))
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


def _is_const(e, value=None):
    return isinstance(e, Const) and (value is None or e.value == value)


# Smart constructors.  Only identity / annihilator rules and folding of
# constant operands; there is no canonical form.

def add(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if isinstance(b, Neg):
        return sub(a, b.arg)
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if isinstance(b, Neg):
        return add(a, b.arg)
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
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
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return ZERO
    if _is_const(a) and _is_const(b) and b.value != 0.0:
        return Const(a.value / b.value)
    return Div(a, b)


def power(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 0.0):
        return ONE
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 1.0):
        return ONE
    return Pow(a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def func(name: str, a: Expr) -> Expr:
    return Func(name, a)


def variables(n: int) -> tuple[Var, ...]:
    """Return ``(x1, ..., xn)``."""
    return tuple(Var(i) for i in range(1, n + 1))


def _children(e):
    if isinstance(e, _Binary):
        return (e.left, e.right)
    if isinstance(e, (Neg, Func, _SignOf)):
        return (e.arg,)
    return ()


def _walk(e):
    stack, seen = [e], set()
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        yield node
        stack.extend(_children(node))


# ---------------------------------------------------------------------------
# Parser

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)
_IDENT = re.compile(r"x([1-9][0-9]*)\Z")


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos))
        if m.lastgroup != "ws":
            tokens.append((m.lastgroup, m.group(), _byte_offset(text, pos)))
        pos = m.end()
    tokens.append(("end", "", _byte_offset(text, len(text))))
    return tokens


def _byte_offset(text, pos):
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text, dim):
        self.tokens = _tokenize(text)
        self.i = 0
        self.dim = dim

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, offset = self.peek()
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, found {found}", offset)
        return self.take()

    def parse(self):
        e = self.expr()
        kind, text, offset = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {text!r}", offset)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self):
        e = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.factor()
            e = Mul(e, rhs) if op == "*" else Div(e, rhs)
        return e

    def factor(self):
        # factor := unary ("^" unary)?  with the usual reading -a^b = -(a^b):
        # leading minus signs are applied after exponentiation.
        signs = 0
        while self.peek()[:2] == ("op", "-"):
            self.take()
            signs += 1
        e = self.base()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            e = Pow(e, self.unary())
        for _ in range(signs):
            e = Neg(e)
        return e

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.base()

    def base(self):
        kind, text, offset = self.take()
        if kind == "number":
            return Const(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(text, arg)
            m = _IDENT.match(text)
            if m is None:
                raise ParseError(f"unknown identifier {text!r}", offset)
            index = int(m.group(1))
            if index > self.dim:
                raise ParseError(
                    f"variable {text} out of range for dimension {self.dim}", offset)
            return Var(index)
        if text == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"expected operand, found {found}", offset)


def parse_expr(text: str, dim: int) -> Expr:
    """Parse ``text`` into an expression over ``x1..x{dim}``.

    Grammar::

        expr   := term (("+"|"-") term)*
        term   := factor (("*"|"/") factor)*
        factor := unary ("^" unary)?
        unary  := "-" unary | base
        base   := NUMBER | "x"<k> | "(" expr ")" | FUNC "(" expr ")"

    Raises
    ------
    ParseError
        With the byte offset of the offending token.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return _Parser(text, dim).parse()


def _fmt_number(v):
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_text(e: Expr) -> str:
    """Print ``e`` in the parser's grammar; ``parse_expr(to_text(e))`` round-trips."""
    if isinstance(e, Const):
        s = _fmt_number(abs(e.value))
        return f"(-{s})" if e.value < 0 or math.copysign(1.0, e.value) < 0 else s
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Func):
        return f"{e.name}({to_text(e.arg)})"
    if isinstance(e, Neg):
        return f"(-{_wrap(e.arg, Neg.prec)})"
    if isinstance(e, _SignOf):
        # no sign() in the grammar; equal to sign(u) away from u = 0
        return f"(abs({to_text(e.arg)}) / ({to_text(e.arg)}))"
    if isinstance(e, Pow):
        return f"{_wrap(e.left, 5)}^{_wrap(e.right, 5)}"
    # left-associative: right operand of - and / needs parentheses at equal precedence
    left = _wrap(e.left, e.prec)
    right = _wrap(e.right, e.prec + 1)
    return f"{left} {e.symbol} {right}"


def _wrap(e, prec):
    s = to_text(e)
    if isinstance(e, _Binary) and e.prec < prec:
        return f"({s})"
    return s


# ---------------------------------------------------------------------------
# Differentiation

def diff_expr(e: Expr, var: int) -> Expr:
    """Exact partial derivative of ``e`` with respect to ``x{var}``."""
    if var < 1:
        raise ValueError("variable index must be >= 1")
    memo: dict[Expr, Expr] = {}
    return _diff(e, var, memo)


def _diff(e, k, memo):
    hit = memo.get(e)
    if hit is not None:
        return hit
    if isinstance(e, Const):
        d = ZERO
    elif isinstance(e, Var):
        d = ONE if e.index == k else ZERO
    elif isinstance(e, Neg):
        d = neg(_diff(e.arg, k, memo))
    elif isinstance(e, Add):
        d = add(_diff(e.left, k, memo), _diff(e.right, k, memo))
    elif isinstance(e, Sub):
        d = sub(_diff(e.left, k, memo), _diff(e.right, k, memo))
    elif isinstance(e, Mul):
        d = add(mul(_diff(e.left, k, memo), e.right), mul(e.left, _diff(e.right, k, memo)))
    elif isinstance(e, Div):
        du = _diff(e.left, k, memo)
        dv = _diff(e.right, k, memo)
        if _is_const(dv, 0.0):
            d = div(du, e.right)
        else:
            d = div(sub(mul(du, e.right), mul(e.left, dv)), power(e.right, Const(2.0)))
    elif isinstance(e, Pow):
        d = _diff_pow(e, k, memo)
    elif isinstance(e, Func):
        d = mul(_diff_func(e), _diff(e.arg, k, memo))
    else:  # pragma: no cover
        raise TypeError(f"unknown node {e!r}")
    memo[e] = d
    return d


def _diff_pow(e, k, memo):
    u, v = e.left, e.right
    du = _diff(u, k, memo)
    dv = _diff(v, k, memo)
    if _is_const(dv, 0.0):
        # d(u^c) = c u^(c-1) du
        if _is_const(du, 0.0):
            return ZERO
        c = v.value if isinstance(v, Const) else None
        lowered = power(u, Const(c - 1.0)) if c is not None else power(u, sub(v, ONE))
        return mul(mul(v, lowered), du)
    # general case: d(u^v) = u^v (v' ln u + v u'/u)
    return mul(e, add(mul(dv, Func("ln", u)), div(mul(v, du), u)))


def _diff_func(e):
    u = e.arg
    name = e.name
    if name == "sqrt":
        return div(ONE, mul(Const(2.0), e))
    if name == "exp":
        return e
    if name == "ln":
        return div(ONE, u)
    if name == "sin":
        return Func("cos", u)
    if name == "cos":
        return neg(Func("sin", u))
    if name == "abs":
        return _SignOf(u)
    raise TypeError(name)  # pragma: no cover


@dataclass(frozen=True, eq=True)
class _SignOf(Expr):
    """sign(arg) with sign(0) = 0; only produced by differentiating abs."""

    arg: Expr
    prec = 100


def gradient(e: Expr, n: int) -> tuple[Expr, ...]:
    return tuple(diff_expr(e, i) for i in range(1, n + 1))


# ---------------------------------------------------------------------------
# Vector fields

@dataclass(frozen=True)
class VectorField:
    """``dx/dt = F(x)`` with ``F = (F_1, ..., F_n)``."""

    components: tuple[Expr, ...]

    def __post_init__(self):
        comps = tuple(as_expr(c) for c in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise ValueError("a vector field needs at least one component")
        for c in comps:
            if c.max_var > len(comps):
                raise ValueError(
                    f"component {c} references x{c.max_var} beyond dimension {len(comps)}")

    @classmethod
    def parse(cls, texts: Sequence[str]) -> "VectorField":
        n = len(texts)
        return cls(tuple(parse_expr(t, n) for t in texts))

    @property
    def dim(self) -> int:
        return len(self.components)

    def __len__(self):
        return self.dim

    def __getitem__(self, i):
        return self.components[i]

    def scaled(self, factor: Expr) -> "VectorField":
        return VectorField(tuple(mul(factor, c) for c in self.components))

    def __add__(self, other: "VectorField") -> "VectorField":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return VectorField(tuple(add(a, b) for a, b in zip(self.components, other.components)))

    def __str__(self):
        return "[" + ", ".join(to_text(c) for c in self.components) + "]"

    @cached_property
    def batch(self) -> Callable[[np.ndarray], np.ndarray]:
        """Compiled evaluator mapping an ``(N, n)`` array to ``(N, n)``."""
        return compile_batch(self.components, self.dim)

    @cached_property
    def scalar(self) -> Callable[[Sequence[float]], tuple]:
        """Compiled evaluator for one point, returning a tuple of floats."""
        return compile_scalar(self.components, self.dim)


def divergence(F: VectorField) -> Expr:
    """Symbolic ``sum_i dF_i/dx_i``."""
    total = ZERO
    for i, comp in enumerate(F.components, start=1):
        total = add(total, diff_expr(comp, i))
    return total


# ---------------------------------------------------------------------------
# Evaluation

def _scalar_pow(a, b):
    if a < 0.0 and b != int(b):
        raise DomainError(f"negative base {a} raised to non-integer power {b}")
    if a == 0.0 and b < 0.0:
        raise DomainError("zero raised to a negative power")
    try:
        return math.pow(a, b)
    except OverflowError:
        raise DomainError("overflow in power") from None


def _scalar_div(a, b):
    if b == 0.0:
        raise DomainError("division by zero")
    return a / b


def _scalar_sqrt(a):
    if a < 0.0:
        raise DomainError(f"sqrt of negative value {a}")
    return math.sqrt(a)


def _scalar_ln(a):
    if a <= 0.0:
        raise DomainError(f"ln of non-positive value {a}")
    return math.log(a)


def _scalar_exp(a):
    try:
        return math.exp(a)
    except OverflowError:
        raise DomainError("overflow in exp") from None


def _scalar_sign(a):
    return (a > 0.0) - (a < 0.0)


_SCALAR_NS = {
    "pow_": _scalar_pow, "div_": _scalar_div, "sqrt": _scalar_sqrt, "ln": _scalar_ln,
    "exp": _scalar_exp, "sin": math.sin, "cos": math.cos, "abs": abs, "sign_": _scalar_sign,
}


def _np_pow(a, b):
    return np.power(a, b)


_BATCH_NS = {
    "pow_": _np_pow, "div_": np.divide, "sqrt": np.sqrt, "ln": np.log, "exp": np.exp,
    "sin": np.sin, "cos": np.cos, "abs": np.abs, "sign_": np.sign,
}


def _emit(roots, n, arg_unpack):
    """Emit straight-line code with one temporary per distinct subtree."""
    lines = [arg_unpack]
    names: dict[Expr, str] = {}

    def visit(e):
        got = names.get(e)
        if got is not None:
            return got
        if isinstance(e, Const):
            return repr(e.value)
        if isinstance(e, Var):
            return f"x{e.index}"
        if isinstance(e, Neg):
            code = f"-{visit(e.arg)}"
        elif isinstance(e, Add):
            code = f"{visit(e.left)} + {visit(e.right)}"
        elif isinstance(e, Sub):
            code = f"{visit(e.left)} - {visit(e.right)}"
        elif isinstance(e, Mul):
            code = f"{visit(e.left)} * {visit(e.right)}"
        elif isinstance(e, Div):
            code = f"div_({visit(e.left)}, {visit(e.right)})"
        elif isinstance(e, Pow):
            code = f"pow_({visit(e.left)}, {visit(e.right)})"
        elif isinstance(e, Func):
            code = f"{e.name}({visit(e.arg)})"
        elif isinstance(e, _SignOf):
            code = f"sign_({visit(e.arg)})"
        else:  # pragma: no cover
            raise TypeError(e)
        name = f"t{len(names)}"
        lines.append(f"    {name} = {code}")
        names[e] = name
        return name

    outs = [visit(r) for r in roots]
    return lines, outs


def compile_scalar(roots: Sequence[Expr], n: int) -> Callable[[Sequence[float]], tuple]:
    """Compile expressions into ``f(point) -> tuple of floats`` (pure Python)."""
    unpack = "def _f(p):\n    " + "".join(f"x{i + 1}, " for i in range(n)) + "= p" if n else "def _f(p):"
    lines, outs = _emit(roots, n, unpack)
    lines.append(f"    return ({', '.join(outs)},)")
    ns = dict(_SCALAR_NS)
    exec("\n".join(lines), ns)  # noqa: S102 - source is generated from the AST
    inner = ns["_f"]

    def f(point):
        if len(point) != n:
            raise ValueError(f"point has {len(point)} coordinates, expected {n}")
        try:
            return inner(tuple(float(v) for v in point))
        except DomainError as err:
            raise DomainError(str(err), point) from None
        except (ZeroDivisionError, OverflowError, ValueError) as err:
            raise DomainError(str(err), point) from None

    return f


def compile_batch(roots: Sequence[Expr], n: int) -> Callable[[np.ndarray], np.ndarray]:
    """Compile expressions into a vectorised ``f(X) -> (N, len(roots))`` kernel.

    Invalid operations produce ``nan``/``inf`` entries instead of raising;
    callers decide how to report them.
    """
    unpack = "def _f(X):\n    " + "".join(f"x{i + 1}, " for i in range(n)) + "= X.T"
    lines, outs = _emit(roots, n, unpack)
    lines.append(f"    return ({', '.join(outs)},)")
    ns = dict(_BATCH_NS)
    exec("\n".join(lines), ns)  # noqa: S102
    inner = ns["_f"]

    def f(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != n:
            raise ValueError(f"points have {X.shape[1]} coordinates, expected {n}")
        with np.errstate(all="ignore"):
            cols = inner(X)
        out = np.empty((X.shape[0], len(cols)))
        for j, c in enumerate(cols):
            out[:, j] = c
        # negative base with non-integer exponent gives nan in numpy already
        return out

    return f


def eval_expr(e: Expr, p: Sequence[float]) -> float:
    """Evaluate ``e`` at point ``p``.

    Raises
    ------
    DomainError
        On division by zero, ``ln``/``sqrt`` outside their domain, or a
        negative base with a non-integer exponent.  The error carries ``p``.
    """
    if e.max_var > len(p):
        raise ValueError(f"expression uses x{e.max_var} but point has {len(p)} coordinates")
    return compile_scalar([e], len(p))(p)[0]


def fd_divergence(F: VectorField, p: Sequence[float], h: float = 1e-5) -> float:
    """Central-difference estimate of ``div F`` at ``p``."""
    if h <= 0:
        raise ValueError("h must be positive")
    p = np.asarray(p, dtype=float)
    if p.shape != (F.dim,):
        raise ValueError("point dimension does not match the field")
    f = F.scalar
    total = 0.0
    for i in range(F.dim):
        step = np.zeros(F.dim)
        step[i] = h
        total += (f(p + step)[i] - f(p - step)[i]) / (2.0 * h)
    return total


def fd_divergence_batch(F: VectorField, X: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Vectorised :func:`fd_divergence` over the rows of ``X``."""
    X = np.asarray(X, dtype=float)
    total = np.zeros(X.shape[0])
    for i in range(F.dim):
        step = np.zeros(F.dim)
        step[i] = h
        total += (F.batch(X + step)[:, i] - F.batch(X - step)[:, i]) / (2.0 * h)
    return total
