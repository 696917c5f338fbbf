"""Expression language for vector-field components.

Infix arithmetic over a fixed, ordered set of variable names with
``+ - * / ^`` (integer exponents only), unary minus and the functions
``sin``, ``cos``, ``exp``, ``log``.  Expressions are immutable trees that
can be evaluated, differentiated exactly, printed back to parseable text
and compiled to vectorised numpy callables.

Precedence, highest first: ``^`` (right associative), unary minus,
``* /``, ``+ -`` (left associative).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import EvaluationError, ParseError

__all__ = [
    "Expression",
    "parse_expression",
    "evaluate",
    "differentiate",
    "constant",
]

FUNCTIONS = ("sin", "cos", "exp", "log")

# Gauss-Legendre rule on [0, 1] used by the quadrature node
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
QUAD_NODES = tuple(float(v) for v in 0.5 * (_GL_X + 1.0))
QUAD_WEIGHTS = tuple(float(v) for v in 0.5 * _GL_W)


# ---------------------------------------------------------------------------
# tree nodes


class Node:
    __slots__ = ()


@dataclass(frozen=True)
class Const(Node):
    value: float


@dataclass(frozen=True)
class Var(Node):
    index: int


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class BinOp(Node):
    op: str  # one of + - * /
    left: Node
    right: Node


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: int


@dataclass(frozen=True)
class Func(Node):
    name: str
    arg: Node


@dataclass(frozen=True)
class Quad(Node):
    """``sum_i w_i s_i**power * body(v[index] -> s_i v[index])``.

    Fixed-order Gauss quadrature of ``int_0^1 s**power body(s*v, ...) ds``;
    closed under differentiation, which keeps jets of quadrature-defined
    fields exact up to the rule's polynomial degree.
    """

    body: Node
    index: int
    power: int


ZERO = Const(0.0)
ONE = Const(1.0)


def _is_const(node: Node, value: float | None = None) -> bool:
    return isinstance(node, Const) and (value is None or node.value == value)


# smart constructors: fold constants and trivial identities only


def _add(a: Node, b: Node) -> Node:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    return BinOp("+", a, b)


def _sub(a: Node, b: Node) -> Node:
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return _neg(b)
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    return BinOp("-", a, b)


def _mul(a: Node, b: Node) -> Node:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    return BinOp("*", a, b)


def _div(a: Node, b: Node) -> Node:
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    return BinOp("/", a, b)


def _neg(a: Node) -> Node:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _pow(a: Node, n: int) -> Node:
    if n == 0:
        return ONE
    if n == 1:
        return a
    if isinstance(a, Const) and n > 0:
        return Const(a.value**n)
    return Pow(a, n)


# ---------------------------------------------------------------------------
# Expression wrapper


class Expression:
    """Immutable expression tree bound to an ordered tuple of variable names."""

    __slots__ = ("root", "variables", "__dict__")

    def __init__(self, root: Node, variables: Sequence[str]):
        self.root = root
        self.variables = tuple(variables)

    def __repr__(self) -> str:
        return f"Expression({self.to_string()!r}, variables={self.variables})"

    def __str__(self) -> str:
        return self.to_string()

    def to_string(self) -> str:
        return _to_string(self.root, self.variables)

    def evaluate(self, point: Sequence[float]) -> float:
        return evaluate(self, point)

    def diff(self, var: str) -> "Expression":
        return differentiate(self, var)

    @property
    def is_zero(self) -> bool:
        return _is_const(self.root, 0.0)

    def uses(self) -> set[int]:
        """Indices of variables that occur in the tree."""
        found: set[int] = set()
        _collect_vars(self.root, found)
        return found

    @cached_property
    def compiled(self) -> Callable[..., np.ndarray]:
        """Vectorised numpy callable taking one array per variable."""
        names = [f"v{i}" for i in range(len(self.variables))]
        src = _source(self.root, names)
        code = f"def _f({', '.join(names)}):\n    return {src}\n"
        env: dict = {"_np": np}
        exec(code, env)  # noqa: S102 - source generated from a validated tree
        return env["_f"]


def constant(value: float, variables: Sequence[str]) -> Expression:
    return Expression(Const(float(value)), variables)


def _collect_vars(node: Node, found: set[int]) -> None:
    if isinstance(node, Var):
        found.add(node.index)
    elif isinstance(node, (Neg, Func)):
        _collect_vars(node.arg, found)
    elif isinstance(node, BinOp):
        _collect_vars(node.left, found)
        _collect_vars(node.right, found)
    elif isinstance(node, Pow):
        _collect_vars(node.base, found)
    elif isinstance(node, Quad):
        _collect_vars(node.body, found)


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_Ͱ-Ͽ][A-Za-z_0-9Ͱ-Ͽ]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _byte_offset(text: str, i: int) -> int:
    return len(text[:i].encode("utf-8"))


class _Parser:
    def __init__(self, text: str, variables: Sequence[str], aliases: Mapping[str, str]):
        self.text = text
        self.index = {name: i for i, name in enumerate(variables)}
        self.aliases = dict(aliases)
        self.tokens = self._tokenize()
        self.pos = 0

    def _tokenize(self) -> list[tuple[str, str, int]]:
        text = self.text
        tokens = []
        i = 0
        while i < len(text):
            if text[i].isspace():
                i += 1
                continue
            m = _TOKEN_RE.match(text, i)
            if m is None or m.end() == i:
                raise ParseError(f"unexpected character {text[i]!r}", _byte_offset(text, i))
            kind = m.lastgroup
            start = m.start(kind)
            tokens.append((kind, m.group(kind), _byte_offset(text, start)))
            i = m.end()
        tokens.append(("end", "", _byte_offset(text, len(text))))
        return tokens

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.pos]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, value: str) -> None:
        kind, val, off = self.take()
        if val != value or kind != "op":
            what = "end of input" if kind == "end" else repr(val)
            raise ParseError(f"expected {value!r}, found {what}", off)

    def parse(self) -> Node:
        node = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", off)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.primary()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.take()
            off = self.peek()[2]
            exponent = self.unary()
            found: set[int] = set()
            _collect_vars(exponent, found)
            if found:
                raise ParseError("exponent must be an integer constant", off)
            value = _eval(exponent, ())
            if not float(value).is_integer():
                raise ParseError(f"fractional exponent {value!r}", off)
            return Pow(base, int(value))
        return base

    def primary(self) -> Node:
        kind, val, off = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "name":
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(val, arg)
            name = self.aliases.get(val, val)
            if name not in self.index:
                raise ParseError(f"unknown identifier {val!r}", off)
            return Var(self.index[name])
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            raise ParseError("unexpected end of input", off)
        raise ParseError(f"unexpected token {val!r}", off)


def parse_expression(
    text: str,
    variables: Sequence[str],
    aliases: Mapping[str, str] | None = None,
) -> Expression:
    """Parse infix ``text`` over the ordered ``variables``.

    ``aliases`` maps alternative spellings onto declared names, e.g.
    ``{"y": "y1"}``.  Raises :class:`ParseError` with the byte offset of
    the offending token.
    """
    if not isinstance(text, str):
        raise ParseError(f"expression must be a string, got {type(text).__name__}")
    parser = _Parser(text, variables, aliases or {})
    return Expression(parser.parse(), variables)


# ---------------------------------------------------------------------------
# evaluation


def _eval(node: Node, point: Sequence[float]) -> float:
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return point[node.index]
    if isinstance(node, Neg):
        return -_eval(node.arg, point)
    if isinstance(node, BinOp):
        a = _eval(node.left, point)
        b = _eval(node.right, point)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if b == 0.0:
            raise EvaluationError("division by zero")
        return a / b
    if isinstance(node, Pow):
        base = _eval(node.base, point)
        if base == 0.0 and node.exponent < 0:
            raise EvaluationError("division by zero")
        return base**node.exponent
    if isinstance(node, Func):
        a = _eval(node.arg, point)
        if node.name == "log" and a <= 0.0:
            raise EvaluationError(f"log of non-positive value {a!r}")
        return getattr(math, node.name)(a)
    if isinstance(node, Quad):
        total = 0.0
        p = list(point)
        base = p[node.index]
        for s, w in zip(QUAD_NODES, QUAD_WEIGHTS):
            p[node.index] = s * base
            total += w * s**node.power * _eval(node.body, p)
        return total
    raise TypeError(f"unknown node {node!r}")


def evaluate(expr: Expression, point: Sequence[float]) -> float:
    """Tree-walk evaluation at ``point`` (one value per declared variable)."""
    if len(point) != len(expr.variables):
        raise ValueError(
            f"point has {len(point)} entries, expression has {len(expr.variables)} variables"
        )
    try:
        value = _eval(expr.root, [float(v) for v in point])
    except OverflowError as exc:
        raise EvaluationError(f"overflow: {exc}") from exc
    except ZeroDivisionError as exc:
        raise EvaluationError("division by zero") from exc
    if not math.isfinite(value):
        raise EvaluationError(f"non-finite result {value!r}")
    return float(value)


# ---------------------------------------------------------------------------
# differentiation


def _d(node: Node, k: int) -> Node:
    if isinstance(node, Const):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.index == k else ZERO
    if isinstance(node, Neg):
        return _neg(_d(node.arg, k))
    if isinstance(node, BinOp):
        a, b = node.left, node.right
        da, db = _d(a, k), _d(b, k)
        if node.op == "+":
            return _add(da, db)
        if node.op == "-":
            return _sub(da, db)
        if node.op == "*":
            return _add(_mul(da, b), _mul(a, db))
        # (a/b)' = a'/b - a b'/b^2
        return _sub(_div(da, b), _div(_mul(a, db), _pow(b, 2)))
    if isinstance(node, Pow):
        n = node.exponent
        db = _d(node.base, k)
        if n == 0 or _is_const(db, 0.0):
            return ZERO
        return _mul(_mul(Const(float(n)), _pow(node.base, n - 1)), db)
    if isinstance(node, Func):
        da = _d(node.arg, k)
        if _is_const(da, 0.0):
            return ZERO
        if node.name == "sin":
            return _mul(Func("cos", node.arg), da)
        if node.name == "cos":
            return _neg(_mul(Func("sin", node.arg), da))
        if node.name == "exp":
            return _mul(node, da)
        return _div(da, node.arg)
    if isinstance(node, Quad):
        db = _d(node.body, k)
        if _is_const(db, 0.0):
            return ZERO
        power = node.power + (1 if k == node.index else 0)
        return Quad(db, node.index, power)
    raise TypeError(f"unknown node {node!r}")


def differentiate(expr: Expression, var: str) -> Expression:
    """Exact partial derivative with respect to the declared variable ``var``."""
    try:
        k = expr.variables.index(var)
    except ValueError:
        raise ValueError(f"{var!r} is not a declared variable {expr.variables}") from None
    return Expression(_d(expr.root, k), expr.variables)


# ---------------------------------------------------------------------------
# printing and code generation

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _fmt_const(value: float) -> str:
    text = repr(float(value))
    if text in ("inf", "-inf", "nan"):
        raise ValueError(f"cannot print non-finite constant {text}")
    return f"({text})" if value < 0 else text


def _to_string(node: Node, names: Sequence[str]) -> str:
    if isinstance(node, Const):
        return _fmt_const(node.value)
    if isinstance(node, Var):
        return names[node.index]
    if isinstance(node, Neg):
        return f"(-{_to_string(node.arg, names)})"
    if isinstance(node, BinOp):
        return f"({_to_string(node.left, names)} {node.op} {_to_string(node.right, names)})"
    if isinstance(node, Pow):
        return f"({_to_string(node.base, names)})^({node.exponent})"
    if isinstance(node, Func):
        return f"{node.name}({_to_string(node.arg, names)})"
    if isinstance(node, Quad):
        return f"quad[{names[node.index]},{node.power}]({_to_string(node.body, names)})"
    raise TypeError(f"unknown node {node!r}")


def _source(node: Node, names: Sequence[str]) -> str:
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Var):
        return names[node.index]
    if isinstance(node, Neg):
        return f"(-{_source(node.arg, names)})"
    if isinstance(node, BinOp):
        return f"({_source(node.left, names)} {node.op} {_source(node.right, names)})"
    if isinstance(node, Pow):
        if node.exponent < 0:
            return f"(1.0 / ({_source(node.base, names)}) ** {-node.exponent})"
        return f"(({_source(node.base, names)}) ** {node.exponent})"
    if isinstance(node, Func):
        return f"_np.{node.name}({_source(node.arg, names)})"
    if isinstance(node, Quad):
        terms = []
        for s, w in zip(QUAD_NODES, QUAD_WEIGHTS):
            sub = list(names)
            sub[node.index] = f"({s!r} * {names[node.index]})"
            terms.append(f"{w * s ** node.power!r} * {_source(node.body, sub)}")
        return "(" + " + ".join(terms) + ")"
    raise TypeError(f"unknown node {node!r}")


# ---------------------------------------------------------------------------
# structural helpers used by the field and desingularization modules


def substitute(expr: Expression, values: Mapping[str, float], variables: Sequence[str]) -> Expression:
    """Fix the variables in ``values`` to constants and rebind to ``variables``."""
    old = expr.variables
    remap = {}
    for i, name in enumerate(old):
        if name in values:
            continue
        if name not in variables:
            raise ValueError(f"variable {name!r} is neither fixed nor kept")
        remap[i] = variables.index(name)
    fixed = {old.index(k): float(v) for k, v in values.items() if k in old}

    def walk(node: Node) -> Node:
        if isinstance(node, Const):
            return node
        if isinstance(node, Var):
            if node.index in fixed:
                return Const(fixed[node.index])
            return Var(remap[node.index])
        if isinstance(node, Neg):
            return _neg(walk(node.arg))
        if isinstance(node, BinOp):
            a, b = walk(node.left), walk(node.right)
            return {"+": _add, "-": _sub, "*": _mul, "/": _div}[node.op](a, b)
        if isinstance(node, Pow):
            return _pow(walk(node.base), node.exponent)
        if isinstance(node, Func):
            return Func(node.name, walk(node.arg))
        if isinstance(node, Quad):
            if node.index in fixed:
                raise ValueError("cannot fix the quadrature variable")
            return Quad(walk(node.body), remap[node.index], node.power)
        raise TypeError(f"unknown node {node!r}")

    return Expression(walk(expr.root), variables)


Poly = dict[tuple[int, ...], float]


def _poly_add(p: Poly, q: Poly, sign: float = 1.0) -> Poly:
    out = dict(p)
    for mono, c in q.items():
        out[mono] = out.get(mono, 0.0) + sign * c
    return out


def _poly_mul(p: Poly, q: Poly) -> Poly:
    out: Poly = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            mono = tuple(a + b for a, b in zip(m1, m2))
            out[mono] = out.get(mono, 0.0) + c1 * c2
    return out


def to_polynomial(expr: Expression, max_terms: int = 4096) -> Poly | None:
    """Fully distributed sparse polynomial, or ``None`` if not polynomial."""
    n = len(expr.variables)
    zero = (0,) * n

    def walk(node: Node) -> Poly | None:
        if isinstance(node, Const):
            return {zero: node.value}
        if isinstance(node, Var):
            mono = [0] * n
            mono[node.index] = 1
            return {tuple(mono): 1.0}
        if isinstance(node, Neg):
            p = walk(node.arg)
            return None if p is None else {k: -v for k, v in p.items()}
        if isinstance(node, BinOp):
            p, q = walk(node.left), walk(node.right)
            if p is None or q is None:
                return None
            if node.op == "+":
                out = _poly_add(p, q)
            elif node.op == "-":
                out = _poly_add(p, q, -1.0)
            elif node.op == "*":
                out = _poly_mul(p, q)
            else:
                if set(q) - {zero} or q.get(zero, 0.0) == 0.0:
                    return None
                out = {k: v / q[zero] for k, v in p.items()}
            return out if len(out) <= max_terms else None
        if isinstance(node, Pow):
            if node.exponent < 0:
                return None
            p = walk(node.base)
            if p is None:
                return None
            out = {zero: 1.0}
            for _ in range(node.exponent):
                out = _poly_mul(out, p)
                if len(out) > max_terms:
                    return None
            return out
        if isinstance(node, Func):
            found: set[int] = set()
            _collect_vars(node.arg, found)
            if found:
                return None
            try:
                return {zero: _eval(node, ())}
            except (EvaluationError, ValueError, OverflowError):
                return None
        return None

    poly = walk(expr.root)
    if poly is None:
        return None
    return {k: v for k, v in poly.items() if v != 0.0}


def from_polynomial(poly: Poly, variables: Sequence[str]) -> Expression:
    node: Node = ZERO
    for mono in sorted(poly):
        term: Node = Const(poly[mono])
        for i, e in enumerate(mono):
            if e:
                term = _mul(term, _pow(Var(i), e))
        node = _add(node, term)
    return Expression(node, variables)


def factor_out(expr: Expression, index: int) -> Expression | None:
    """Structural division by variable ``index``.

    Succeeds when every additive term carries the factor; returns ``None``
    otherwise (the caller then tries polynomial expansion or quadrature).
    """

    def walk(node: Node) -> Node | None:
        if isinstance(node, Const):
            return ZERO if node.value == 0.0 else None
        if isinstance(node, Var):
            return ONE if node.index == index else None
        if isinstance(node, Neg):
            a = walk(node.arg)
            return None if a is None else _neg(a)
        if isinstance(node, BinOp):
            if node.op in "+-":
                a, b = walk(node.left), walk(node.right)
                if a is None or b is None:
                    return None
                return _add(a, b) if node.op == "+" else _sub(a, b)
            if node.op == "*":
                a = walk(node.left)
                if a is not None:
                    return _mul(a, node.right)
                b = walk(node.right)
                return None if b is None else _mul(node.left, b)
            a = walk(node.left)
            return None if a is None else _div(a, node.right)
        if isinstance(node, Pow) and node.exponent >= 1:
            a = walk(node.base)
            return None if a is None else _mul(a, _pow(node.base, node.exponent - 1))
        return None

    out = walk(expr.root)
    return None if out is None else Expression(out, expr.variables)


def quadrature_quotient(expr: Expression, index: int) -> Expression:
    """``int_0^1 d/dv F(s v, ...) ds`` as a quadrature node (v = variable ``index``)."""
    body = _d(expr.root, index)
    if _is_const(body, 0.0):
        return Expression(ZERO, expr.variables)
    return Expression(Quad(body, index, 0), expr.variables)
