"""Small expression trees for coordinate-dependent fields.

The language is intentionally tiny: real constants, coordinates, ``+ - * /``,
integer powers, negation, and ``sin``/``cos``/``exp``.  It is closed under
differentiation, so connection coefficients, metrics and candidate fields can
be differentiated exactly to any order.

Expressions are built through smart constructors that fold constants and drop
neutral elements; this keeps derivative trees of constant or polynomial
fields small.
"""
from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

FUNCTIONS = ("sin", "cos", "exp")

_PREC_ADD = 1
_PREC_MUL = 2
_PREC_NEG = 3
_PREC_POW = 4
_PREC_ATOM = 5


class ExprError(ValueError):
    """Malformed expression or unsupported construct."""


class ParseError(ExprError):
    def __init__(self, message: str, text: str = "", col: int | None = None):
        where = f" at column {col + 1}" if col is not None else ""
        shown = f" in {text!r}" if text else ""
        super().__init__(f"{message}{where}{shown}")
        self.col = col


class EvaluationError(ArithmeticError):
    """Evaluation failed (division by zero, overflow) in a named subexpression."""


class Expr:
    """Base class; use the module-level constructors rather than node classes."""

    __slots__ = ()
    prec = _PREC_ATOM

    # operator sugar -------------------------------------------------------
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

    def __pow__(self, k: int):
        return power(self, k)

    def __neg__(self):
        return neg(self)

    # interface ------------------------------------------------------------
    def diff(self, k: int) -> "Expr":
        """Partial derivative with respect to coordinate ``k`` (0-based)."""
        raise NotImplementedError

    def evaluate(self, x: Sequence[float]) -> float:
        """Tree-walking evaluation; raises :class:`EvaluationError` with context."""
        raise NotImplementedError

    def source(self) -> str:
        """Python source for compiled evaluation (``x`` is the point)."""
        raise NotImplementedError

    def to_string(self, names: Sequence[str] | None = None) -> str:
        raise NotImplementedError

    def __str__(self) -> str:
        return self.to_string()

    @property
    def is_const(self) -> bool:
        return isinstance(self, Const)

    def is_zero(self) -> bool:
        return isinstance(self, Const) and self.value == 0.0


def _wrap(e: Expr, prec: int, names) -> str:
    s = e.to_string(names)
    return f"({s})" if e.prec < prec else s


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def diff(self, k):
        return ZERO

    def evaluate(self, x):
        return self.value

    def source(self):
        return repr(float(self.value))

    def to_string(self, names=None):
        v = float(self.value)
        if v.is_integer() and abs(v) < 1e15:
            return str(int(v))
        return repr(v)

    @property
    def prec(self):
        return _PREC_NEG if self.value < 0 else _PREC_ATOM


@dataclass(frozen=True)
class Var(Expr):
    index: int

    def diff(self, k):
        return ONE if k == self.index else ZERO

    def evaluate(self, x):
        return float(x[self.index])

    def source(self):
        return f"x[{self.index}]"

    def to_string(self, names=None):
        if names is not None:
            return names[self.index]
        return f"x{self.index + 1}"


@dataclass(frozen=True)
class Add(Expr):
    a: Expr
    b: Expr
    prec = _PREC_ADD

    def diff(self, k):
        return add(self.a.diff(k), self.b.diff(k))

    def evaluate(self, x):
        return self.a.evaluate(x) + self.b.evaluate(x)

    def source(self):
        return f"({self.a.source()} + {self.b.source()})"

    def to_string(self, names=None):
        return f"{_wrap(self.a, _PREC_ADD, names)} + {_wrap(self.b, _PREC_ADD, names)}"


@dataclass(frozen=True)
class Sub(Expr):
    a: Expr
    b: Expr
    prec = _PREC_ADD

    def diff(self, k):
        return sub(self.a.diff(k), self.b.diff(k))

    def evaluate(self, x):
        return self.a.evaluate(x) - self.b.evaluate(x)

    def source(self):
        return f"({self.a.source()} - {self.b.source()})"

    def to_string(self, names=None):
        return f"{_wrap(self.a, _PREC_ADD, names)} - {_wrap(self.b, _PREC_MUL, names)}"


@dataclass(frozen=True)
class Mul(Expr):
    a: Expr
    b: Expr
    prec = _PREC_MUL

    def diff(self, k):
        return add(mul(self.a.diff(k), self.b), mul(self.a, self.b.diff(k)))

    def evaluate(self, x):
        return self.a.evaluate(x) * self.b.evaluate(x)

    def source(self):
        return f"({self.a.source()} * {self.b.source()})"

    def to_string(self, names=None):
        return f"{_wrap(self.a, _PREC_MUL, names)}*{_wrap(self.b, _PREC_NEG, names)}"


@dataclass(frozen=True)
class Div(Expr):
    a: Expr
    b: Expr
    prec = _PREC_MUL

    def diff(self, k):
        num = sub(mul(self.a.diff(k), self.b), mul(self.a, self.b.diff(k)))
        return div(num, power(self.b, 2))

    def evaluate(self, x):
        den = self.b.evaluate(x)
        if den == 0.0:
            raise EvaluationError(f"division by zero in '{self}' (denominator '{self.b}')")
        return self.a.evaluate(x) / den

    def source(self):
        return f"({self.a.source()} / {self.b.source()})"

    def to_string(self, names=None):
        return f"{_wrap(self.a, _PREC_MUL, names)}/{_wrap(self.b, _PREC_NEG + 1, names)}"


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int
    prec = _PREC_POW

    def diff(self, k):
        inner = self.base.diff(k)
        if inner.is_zero():
            return ZERO
        return mul(mul(Const(float(self.exponent)), power(self.base, self.exponent - 1)), inner)

    def evaluate(self, x):
        b = self.base.evaluate(x)
        if b == 0.0 and self.exponent < 0:
            raise EvaluationError(f"division by zero in '{self}' (zero base, negative exponent)")
        return b ** self.exponent

    def source(self):
        return f"({self.base.source()} ** {self.exponent})"

    def to_string(self, names=None):
        e = str(self.exponent) if self.exponent >= 0 else f"({self.exponent})"
        return f"{_wrap(self.base, _PREC_ATOM, names)}^{e}"


@dataclass(frozen=True)
class Neg(Expr):
    a: Expr
    prec = _PREC_NEG

    def diff(self, k):
        return neg(self.a.diff(k))

    def evaluate(self, x):
        return -self.a.evaluate(x)

    def source(self):
        return f"(-{self.a.source()})"

    def to_string(self, names=None):
        return f"-{_wrap(self.a, _PREC_POW, names)}"


@dataclass(frozen=True)
class Func(Expr):
    name: str
    arg: Expr

    def diff(self, k):
        inner = self.arg.diff(k)
        if inner.is_zero():
            return ZERO
        if self.name == "sin":
            outer = func("cos", self.arg)
        elif self.name == "cos":
            outer = neg(func("sin", self.arg))
        else:
            outer = self
        return mul(outer, inner)

    def evaluate(self, x):
        v = self.arg.evaluate(x)
        try:
            return getattr(math, self.name)(v)
        except OverflowError as exc:
            raise EvaluationError(f"overflow in '{self}'") from exc

    def source(self):
        return f"_m.{self.name}({self.arg.source()})"

    def to_string(self, names=None):
        return f"{self.name}({self.arg.to_string(names)})"


ZERO = Const(0.0)
ONE = Const(1.0)


# ---------------------------------------------------------------------------
# smart constructors
# ---------------------------------------------------------------------------

def as_expr(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, float)):
        return Const(float(v))
    raise ExprError(f"cannot convert {v!r} to an expression")


def const(v: float) -> Expr:
    return Const(float(v))


def var(k: int) -> Expr:
    return Var(k)


def add(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return Const(a.value + b.value)
    if a.is_zero():
        return b
    if b.is_zero():
        return a
    if isinstance(b, Neg):
        return sub(a, b.a)
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return Const(a.value - b.value)
    if b.is_zero():
        return a
    if a.is_zero():
        return neg(b)
    if a == b:
        return ZERO
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return Const(a.value * b.value)
    if a.is_zero() or b.is_zero():
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    if a == Const(-1.0):
        return neg(b)
    if b == Const(-1.0):
        return neg(a)
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if b.is_zero():
        raise EvaluationError(f"division by the constant zero in '{a}/0'")
    if a.is_zero():
        return ZERO
    if b == ONE:
        return a
    if a.is_const and b.is_const:
        return Const(a.value / b.value)
    return Div(a, b)


def power(a: Expr, k: int) -> Expr:
    if int(k) != k:
        raise ExprError(f"only integer exponents are supported, got {k!r}")
    k = int(k)
    if k == 0:
        return ONE
    if k == 1:
        return a
    if a.is_const:
        if a.value == 0.0 and k < 0:
            raise EvaluationError("zero raised to a negative power")
        return Const(a.value ** k)
    return Pow(a, k)


def neg(a: Expr) -> Expr:
    if a.is_const:
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def func(name: str, a: Expr) -> Expr:
    if name not in FUNCTIONS:
        raise ExprError(f"unknown function {name!r}; allowed: {', '.join(FUNCTIONS)}")
    if a.is_const:
        return Const(getattr(math, name)(a.value))
    return Func(name, a)


def sin(a) -> Expr:
    return func("sin", as_expr(a))


def cos(a) -> Expr:
    return func("cos", as_expr(a))


def exp(a) -> Expr:
    return func("exp", as_expr(a))


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _compiled(e: Expr) -> Callable[[Sequence[float]], float]:
    code = compile(f"lambda x: {e.source()}", "<expr>", "eval")
    return eval(code, {"_m": math})


def eval_field(e: Expr, x: Sequence[float]) -> float:
    """Evaluate ``e`` at point ``x``.

    Uses a compiled lambda; on arithmetic failure the tree walker is rerun to
    name the failing subexpression.
    """
    x = tuple(float(v) for v in x)  # plain floats so division by zero raises
    try:
        return float(_compiled(e)(x))
    except (ZeroDivisionError, OverflowError):
        return e.evaluate(x)


def diff_field(e: Expr, k: int) -> Expr:
    """Analytic derivative of ``e`` with respect to coordinate ``k`` (0-based)."""
    return _diff_cached(e, k)


@lru_cache(maxsize=None)
def _diff_cached(e: Expr, k: int) -> Expr:
    return e.diff(k)


def derivative(e: Expr, ks: Sequence[int]) -> Expr:
    """Iterated partial derivative; order of ``ks`` is irrelevant."""
    for k in sorted(ks):
        e = diff_field(e, k)
    return e


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def parse_expr(text: str, names: Sequence[str] = ()) -> Expr:
    """Parse infix text (``+ - * / ^``, ``sin cos exp``, ``pi``).

    Coordinates may be referred to by ``names`` or by ``x1 .. xn`` where
    ``n = len(names)``; with no ``names`` any ``xK`` is accepted.  Exponents
    must be integer literals.
    """
    if not isinstance(text, str):
        if isinstance(text, (int, float)):
            return Const(float(text))
        raise ParseError(f"expected an expression string, got {type(text).__name__}")
    src = text.replace("^", "**")
    try:
        tree = ast.parse(src.strip(), mode="eval")
    except SyntaxError as exc:
        col = (exc.offset - 1) if exc.offset else None
        raise ParseError("syntax error", text, col) from None
    lookup = {name: i for i, name in enumerate(names)}
    for i in range(len(names)):
        lookup.setdefault(f"x{i + 1}", i)
    if not names:
        lookup = _AnyCoordinate()
    return _convert(tree.body, lookup, text)


class _AnyCoordinate(dict):
    def __contains__(self, name):
        return isinstance(name, str) and name[:1] == "x" and name[1:].isdigit() and int(name[1:]) >= 1

    def __getitem__(self, name):
        return int(name[1:]) - 1


def _int_exponent(node, text) -> int:
    sign = 1
    while isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        if isinstance(node.op, ast.USub):
            sign = -sign
        node = node.operand
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        if float(node.value).is_integer():
            return sign * int(node.value)
    raise ParseError("exponent must be an integer literal", text, getattr(node, "col_offset", None))


def _convert(node, lookup, text) -> Expr:
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        return Const(float(node.value))
    if isinstance(node, ast.Name):
        if node.id in lookup:
            return Var(lookup[node.id])
        if node.id == "pi":
            return Const(math.pi)
        raise ParseError(f"unknown name {node.id!r}", text, node.col_offset)
    if isinstance(node, ast.UnaryOp):
        if isinstance(node.op, ast.USub):
            return neg(_convert(node.operand, lookup, text))
        if isinstance(node.op, ast.UAdd):
            return _convert(node.operand, lookup, text)
    if isinstance(node, ast.BinOp):
        if isinstance(node.op, ast.Pow):
            return power(_convert(node.left, lookup, text), _int_exponent(node.right, text))
        left = _convert(node.left, lookup, text)
        right = _convert(node.right, lookup, text)
        if isinstance(node.op, ast.Add):
            return add(left, right)
        if isinstance(node.op, ast.Sub):
            return sub(left, right)
        if isinstance(node.op, ast.Mult):
            return mul(left, right)
        if isinstance(node.op, ast.Div):
            return div(left, right)
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        if node.func.id not in FUNCTIONS:
            raise ParseError(f"unknown function {node.func.id!r}", text, node.col_offset)
        if len(node.args) != 1 or node.keywords:
            raise ParseError(f"{node.func.id} takes exactly one argument", text, node.col_offset)
        return func(node.func.id, _convert(node.args[0], lookup, text))
    raise ParseError(
        f"unsupported construct {type(node).__name__}", text, getattr(node, "col_offset", None)
    )
