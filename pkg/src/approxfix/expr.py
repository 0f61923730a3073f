"""A small expression language for payoffs and single-valued maps.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := ['-'] atom
    atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'

Identifiers are ``x<i>``, ``y<i>`` and the functions ``min``, ``max``, ``abs``.
Expressions evaluate pointwise, on numpy batches, over intervals, and carry
interval enclosures of their gradient for Lipschitz bounds.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .geometry import Box
from .modulus import Lipschitz, ContinuityModulus

DIV_EPS = 1e-12
DIV_INTERVAL_EPS = 1e-9


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


# --- AST -------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    group: str  # "x" or "y"
    index: int


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
    args: tuple["Expr", ...]


Expr = Num | Var | Neg | BinOp | Call

FUNCTIONS = {"min": (2, None), "max": (2, None), "abs": (1, 1)}

# --- parsing ---------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_]\w*)|(?P<op>[-+*/(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.take()
        if val != value or kind == "end":
            raise ExprSyntaxError(f"expected {value!r}", pos)

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {val!r}", pos)
        return e

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Expr:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.atom())
        return self.atom()

    def atom(self) -> Expr:
        kind, val, pos = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "ident":
            m = re.fullmatch(r"([xy])(\d+)", val)
            if m:
                return Var(m.group(1), int(m.group(2)))
            if val not in FUNCTIONS:
                raise ExprSyntaxError(f"unknown identifier {val!r}", pos)
            self.expect("(")
            args = [self.expr()]
            while self.peek()[:2] == ("op", ","):
                self.take()
                args.append(self.expr())
            self.expect(")")
            lo, hi = FUNCTIONS[val]
            if len(args) < lo or (hi is not None and len(args) > hi):
                raise ExprSyntaxError(f"{val} takes {lo if hi == lo else f'at least {lo}'} "
                                      f"argument(s), got {len(args)}", pos)
            return Call(val, tuple(args))
        if kind == "end":
            raise ExprSyntaxError("unexpected end of input", pos)
        raise ExprSyntaxError(f"unexpected {val!r}", pos)


def parse(text: str) -> Expr:
    return _Parser(text).parse()


def to_string(e: Expr) -> str:
    """Canonical, fully parenthesised form; ``parse(to_string(e)) == e``."""
    if isinstance(e, Num):
        s = repr(float(e.value))
        return f"({s})" if e.value < 0 else s
    if isinstance(e, Var):
        return f"{e.group}{e.index}"
    if isinstance(e, Neg):
        return f"(-{to_string(e.arg)})"
    if isinstance(e, BinOp):
        return f"({to_string(e.left)} {e.op} {to_string(e.right)})"
    return f"{e.name}({', '.join(to_string(a) for a in e.args)})"


def dimensions(e: Expr) -> tuple[int, int]:
    """Number of x and y variables the expression references (max index + 1)."""
    nx = ny = 0
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            if node.group == "x":
                nx = max(nx, node.index + 1)
            else:
                ny = max(ny, node.index + 1)
        elif isinstance(node, Neg):
            stack.append(node.arg)
        elif isinstance(node, BinOp):
            stack.extend((node.left, node.right))
        elif isinstance(node, Call):
            stack.extend(node.args)
    return nx, ny


def _coerce(e) -> Expr:
    return parse(e) if isinstance(e, str) else e


# --- point and batch evaluation ---------------------------------------------


def _ev(e: Expr, env: dict):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        vals = env[e.group]
        if vals is None or e.index >= vals.shape[-1]:
            raise ExprError(f"variable {e.group}{e.index} is not bound")
        return vals[..., e.index]
    if isinstance(e, Neg):
        return -_ev(e.arg, env)
    if isinstance(e, BinOp):
        a = _ev(e.left, env)
        b = _ev(e.right, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if np.any(np.abs(b) < DIV_EPS):
            raise ExprError("division by a value too close to zero")
        return a / b
    args = [_ev(a, env) for a in e.args]
    if e.name == "abs":
        return np.abs(args[0])
    fn = np.minimum if e.name == "min" else np.maximum
    out = args[0]
    for a in args[1:]:
        out = fn(out, a)
    return out


def evaluate(e, x, y=None) -> float:
    e = _coerce(e)
    env = {"x": np.atleast_1d(np.asarray(x, dtype=float)),
           "y": None if y is None else np.atleast_1d(np.asarray(y, dtype=float))}
    return float(_ev(e, env))


def evaluate_batch(e, X, Y=None) -> np.ndarray:
    """Evaluate on rows of ``X`` (and ``Y``); broadcasting over leading axes is allowed."""
    e = _coerce(e)
    X = np.asarray(X, dtype=float)
    env = {"x": X, "y": None if Y is None else np.asarray(Y, dtype=float)}
    shape = np.broadcast_shapes(X.shape[:-1], () if Y is None else np.shape(Y)[:-1])
    return np.broadcast_to(np.asarray(_ev(e, env), dtype=float), shape).copy()


# --- interval arithmetic -----------------------------------------------------


def _down(v: float) -> float:
    return math.nextafter(v, -math.inf)


def _up(v: float) -> float:
    return math.nextafter(v, math.inf)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ExprError(f"invalid interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, v: float) -> "Interval":
        return cls(v, v)

    def contains(self, v: float) -> bool:
        return self.lo <= v <= self.hi

    @property
    def mag(self) -> float:
        return max(abs(self.lo), abs(self.hi))

    def __add__(self, o: "Interval") -> "Interval":
        return Interval(_down(self.lo + o.lo), _up(self.hi + o.hi))

    def __sub__(self, o: "Interval") -> "Interval":
        return Interval(_down(self.lo - o.hi), _up(self.hi - o.lo))

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __mul__(self, o: "Interval") -> "Interval":
        prods = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi]
        return Interval(_down(min(prods)), _up(max(prods)))

    def __truediv__(self, o: "Interval") -> "Interval":
        if o.lo <= DIV_INTERVAL_EPS and o.hi >= -DIV_INTERVAL_EPS:
            raise ExprError(f"denominator enclosure [{o.lo}, {o.hi}] is not bounded away from 0")
        inv = Interval(_down(1.0 / o.hi), _up(1.0 / o.lo))
        return self * inv

    def hull(self, o: "Interval") -> "Interval":
        return Interval(min(self.lo, o.lo), max(self.hi, o.hi))

    def abs(self) -> "Interval":
        if self.lo >= 0:
            return self
        if self.hi <= 0:
            return -self
        return Interval(0.0, max(-self.lo, self.hi))


_ZERO = Interval(0.0, 0.0)


def _box_intervals(box: Box | None) -> list[Interval]:
    if box is None:
        return []
    return [Interval(float(lo), float(hi)) for lo, hi in zip(box.lower, box.upper)]


def _iv(e: Expr, env: dict) -> Interval:
    if isinstance(e, Num):
        return Interval.point(e.value)
    if isinstance(e, Var):
        vals = env[e.group]
        if e.index >= len(vals):
            raise ExprError(f"variable {e.group}{e.index} is not covered by the box")
        return vals[e.index]
    if isinstance(e, Neg):
        return -_iv(e.arg, env)
    if isinstance(e, BinOp):
        a, b = _iv(e.left, env), _iv(e.right, env)
        return {"+": a.__add__, "-": a.__sub__, "*": a.__mul__, "/": a.__truediv__}[e.op](b)
    args = [_iv(a, env) for a in e.args]
    if e.name == "abs":
        return args[0].abs()
    out = args[0]
    for a in args[1:]:
        if e.name == "min":
            out = Interval(min(out.lo, a.lo), min(out.hi, a.hi))
        else:
            out = Interval(max(out.lo, a.lo), max(out.hi, a.hi))
    return out


def interval_eval(e, box_x: Box, box_y: Box | None = None) -> Interval:
    e = _coerce(e)
    return _iv(e, {"x": _box_intervals(box_x), "y": _box_intervals(box_y)})


def _grad(e: Expr, env: dict, nvars: int) -> tuple[Interval, list[Interval]]:
    """Forward-mode interval differentiation: (value enclosure, gradient enclosures)."""
    if isinstance(e, Num):
        return Interval.point(e.value), [_ZERO] * nvars
    if isinstance(e, Var):
        val = _iv(e, env)
        g = [_ZERO] * nvars
        g[env["offset"][e.group] + e.index] = Interval.point(1.0)
        return val, g
    if isinstance(e, Neg):
        v, g = _grad(e.arg, env, nvars)
        return -v, [-gi for gi in g]
    if isinstance(e, BinOp):
        va, ga = _grad(e.left, env, nvars)
        vb, gb = _grad(e.right, env, nvars)
        if e.op == "+":
            return va + vb, [p + q for p, q in zip(ga, gb)]
        if e.op == "-":
            return va - vb, [p - q for p, q in zip(ga, gb)]
        if e.op == "*":
            return va * vb, [p * vb + va * q for p, q in zip(ga, gb)]
        val = va / vb
        sq = vb * vb
        return val, [(p * vb - va * q) / sq for p, q in zip(ga, gb)]
    parts = [_grad(a, env, nvars) for a in e.args]
    val = _iv(e, env)
    if e.name == "abs":
        (v, g), = parts
        if v.lo >= 0:
            return val, g
        if v.hi <= 0:
            return val, [-gi for gi in g]
        return val, [gi.hull(-gi) for gi in g]
    grads = parts[0][1]
    for _, g in parts[1:]:
        grads = [p.hull(q) for p, q in zip(grads, g)]
    return val, grads


def gradient_enclosure(e, box_x: Box, box_y: Box | None = None) -> list[Interval]:
    e = _coerce(e)
    xs, ys = _box_intervals(box_x), _box_intervals(box_y)
    env = {"x": xs, "y": ys, "offset": {"x": 0, "y": len(xs)}}
    return _grad(e, env, len(xs) + len(ys))[1]


def lipschitz_modulus(e, box_x: Box, box_y: Box | None = None) -> Lipschitz:
    """Lipschitz modulus w.r.t. the max metric on the joint (x, y) box.

    The constant is the sum over variables of the largest partial-derivative
    magnitude; constants get the floored slope and a delta capped at the box diameter.
    """
    grads = gradient_enclosure(e, box_x, box_y)
    L = sum(g.mag for g in grads)
    if not math.isfinite(L):
        raise ExprError("derivative enclosure is unbounded")
    sides = list(box_x.sides) + ([] if box_y is None else list(box_y.sides))
    cap = max(float(max(sides)), 1e-12) if sides else 1.0
    return Lipschitz.floored(L, cap=cap)


__all__ = [
    "BinOp", "Call", "ContinuityModulus", "Expr", "ExprError", "ExprSyntaxError", "Interval",
    "Neg", "Num", "Var", "dimensions", "evaluate", "evaluate_batch", "gradient_enclosure",
    "interval_eval", "lipschitz_modulus", "parse", "to_string",
]
