"""Field-definition expressions: recursive-descent parser, printer and evaluators.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' expo)?
    expo   := ('-' | '+') expo | power          # right-associative
    atom   := NUMBER | NAME | NAME '(' args ')' | '(' expr ')'

`i` is the imaginary unit and `pi` is pi.  Exponents must be integer constants.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "log": 1, "sqrt": 1, "abs2": None}
CONSTANTS = {"i": 1j, "pi": np.pi}


class ExprError(ValueError):
    """Syntax or resolution error with a 1-based line/column."""

    def __init__(self, message: str, line: int = 1, col: int = 1):
        super().__init__(f"{line}:{col}: {message}")
        self.message, self.line, self.col = message, line, col


class DomainError(ValueError):
    def __init__(self, point, function: str):
        super().__init__(f"{function} outside its domain at {point}")
        self.point, self.function = point, function


@dataclass(frozen=True)
class Span:
    start: int
    end: int


@dataclass(frozen=True)
class Num:
    value: float
    span: Span = field(default=Span(0, 0), compare=False)


@dataclass(frozen=True)
class Name:
    name: str
    span: Span = field(default=Span(0, 0), compare=False)


@dataclass(frozen=True)
class Neg:
    operand: object
    span: Span = field(default=Span(0, 0), compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object
    span: Span = field(default=Span(0, 0), compare=False)


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple
    span: Span = field(default=Span(0, 0), compare=False)


_TOKEN = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))")


def _tokenize(text: str):
    pos, out = 0, []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            j = pos
            while j < len(text) and text[j].isspace():
                j += 1
            raise ExprError(f"unexpected character {text[j]!r}", *_linecol(text, j))
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind), m.end()))
        pos = m.end()
    out.append(("end", "", len(text), len(text)))
    return out


def _linecol(text: str, pos: int) -> tuple[int, int]:
    line = text.count("\n", 0, pos) + 1
    return line, pos - (text.rfind("\n", 0, pos) + 1) + 1


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.k = 0

    @property
    def tok(self):
        return self.toks[self.k]

    def error(self, msg, pos=None):
        return ExprError(msg, *_linecol(self.text, self.tok[2] if pos is None else pos))

    def eat(self, value):
        if self.tok[1] != value or self.tok[0] not in ("op",):
            found = self.tok[1] or "end of input"
            raise self.error(f"expected {value!r}, found {found!r}")
        self.k += 1

    def parse(self):
        e = self.expr()
        if self.tok[0] != "end":
            raise self.error(f"unexpected {self.tok[1]!r}")
        return e

    def expr(self):
        e = self.term()
        while self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.tok[1]
            self.k += 1
            r = self.term()
            e = BinOp(op, e, r, Span(e.span.start, r.span.end))
        return e

    def term(self):
        e = self.unary()
        while self.tok[0] == "op" and self.tok[1] in "*/":
            op = self.tok[1]
            self.k += 1
            r = self.unary()
            e = BinOp(op, e, r, Span(e.span.start, r.span.end))
        return e

    def unary(self):
        if self.tok[0] == "op" and self.tok[1] in "+-":
            op, start = self.tok[1], self.tok[2]
            self.k += 1
            e = self.unary()
            return Neg(e, Span(start, e.span.end)) if op == "-" else e
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok[0] == "op" and self.tok[1] == "^":
            self.k += 1
            ex = self.expo()
            return BinOp("^", base, ex, Span(base.span.start, ex.span.end))
        return base

    def expo(self):
        if self.tok[0] == "op" and self.tok[1] in "+-":
            op, start = self.tok[1], self.tok[2]
            self.k += 1
            e = self.expo()
            return Neg(e, Span(start, e.span.end)) if op == "-" else e
        return self.power()

    def atom(self):
        kind, val, start, end = self.tok
        if kind == "num":
            self.k += 1
            return Num(float(val), Span(start, end))
        if kind == "name":
            self.k += 1
            if self.tok[0] == "op" and self.tok[1] == "(":
                if val not in FUNCTIONS:
                    raise ExprError(f"unknown function {val!r}", *_linecol(self.text, start))
                self.k += 1
                args = [self.expr()]
                while self.tok[1] == "," and self.tok[0] == "op":
                    self.k += 1
                    args.append(self.expr())
                close = self.tok[3]
                self.eat(")")
                arity = FUNCTIONS[val]
                if arity is not None and len(args) != arity:
                    raise ExprError(f"{val} takes {arity} argument(s), got {len(args)}", *_linecol(self.text, start))
                return Call(val, tuple(args), Span(start, close))
            return Name(val, Span(start, end))
        if kind == "op" and val == "(":
            self.k += 1
            e = self.expr()
            self.eat(")")
            return e
        raise self.error("unexpected end of input" if kind == "end" else f"unexpected {val!r}")


def parse(text: str):
    return _Parser(text).parse()


# printing --------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _prec(e) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC["neg"]
    return 5


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() and abs(v) < 1e15 else repr(float(v))


def to_text(e) -> str:
    """Minimal-parenthesis printer; parse(to_text(e)) == e."""
    if isinstance(e, Num):
        return _num(e.value)
    if isinstance(e, Name):
        return e.name
    if isinstance(e, Call):
        return f"{e.fn}({', '.join(to_text(a) for a in e.args)})"
    if isinstance(e, Neg):
        s = to_text(e.operand)
        return "-" + (f"({s})" if _prec(e.operand) < _PREC["neg"] else s)
    p = _PREC[e.op]
    ls, rs = to_text(e.left), to_text(e.right)
    if e.op == "^":
        lp = _prec(e.left) <= p
        rp = _prec(e.right) < _PREC["neg"]
    else:
        lp = _prec(e.left) < p
        rp = _prec(e.right) <= p
    ls = f"({ls})" if lp else ls
    rs = f"({rs})" if rp else rs
    return f"{ls}^{rs}" if e.op == "^" else f"{ls} {e.op} {rs}"


_NAMES = {"+": "Add", "-": "Sub", "*": "Mul", "/": "Div", "^": "Pow"}


def to_tree(e) -> str:
    """Constructor-style rendering, e.g. Add(Sin(x1), Mul(i, Cos(x2)))."""
    if isinstance(e, Num):
        return _num(e.value)
    if isinstance(e, Name):
        return e.name
    if isinstance(e, Neg):
        return f"Neg({to_tree(e.operand)})"
    if isinstance(e, Call):
        return f"{e.fn.capitalize()}({', '.join(to_tree(a) for a in e.args)})"
    return f"{_NAMES[e.op]}({to_tree(e.left)}, {to_tree(e.right)})"


def names(e) -> set:
    if isinstance(e, Name):
        return {e.name}
    if isinstance(e, Neg):
        return names(e.operand)
    if isinstance(e, BinOp):
        return names(e.left) | names(e.right)
    if isinstance(e, Call):
        return set().union(*(names(a) for a in e.args))
    return set()


# evaluation ------------------------------------------------------------------

def resolve(e, allowed, text: str = "") -> None:
    """Raise ExprError for identifiers outside `allowed` (plus i, pi)."""
    for node in _walk(e):
        if isinstance(node, Name) and node.name not in CONSTANTS and node.name not in allowed:
            raise ExprError(f"unknown identifier {node.name!r}", *_linecol(text, node.span.start))


def _walk(e):
    yield e
    if isinstance(e, Neg):
        yield from _walk(e.operand)
    elif isinstance(e, BinOp):
        yield from _walk(e.left)
        yield from _walk(e.right)
    elif isinstance(e, Call):
        for a in e.args:
            yield from _walk(a)


def _integer_exponent(e, params) -> int:
    v = complex(evaluate_values(e, {}, params))
    if v.imag != 0 or not float(v.real).is_integer():
        raise ExprError("exponent must be an integer constant")
    return int(v.real)


def evaluate_values(e, coords: dict, params: dict | None = None, points=None):
    """Evaluate on arrays: `coords` maps coordinate names to grid arrays."""
    params = params or {}

    def ev(n):
        if isinstance(n, Num):
            return n.value
        if isinstance(n, Name):
            if n.name in coords:
                return coords[n.name]
            if n.name in params:
                return params[n.name]
            if n.name in CONSTANTS:
                return CONSTANTS[n.name]
            raise ExprError(f"unknown identifier {n.name!r}")
        if isinstance(n, Neg):
            return -ev(n.operand)
        if isinstance(n, BinOp):
            if n.op == "^":
                k = _integer_exponent(n.right, params)
                base = ev(n.left)
                if k < 0:
                    _nonzero(base, points, "^")
                    return 1 / np.asarray(base, dtype=complex) ** (-k)
                return base**k
            a, b = ev(n.left), ev(n.right)
            if n.op == "+":
                return a + b
            if n.op == "-":
                return a - b
            if n.op == "*":
                return a * b
            _nonzero(b, points, "/")
            return a / np.asarray(b, dtype=complex)
        args = [ev(a) for a in n.args]
        if n.fn == "abs2":
            return sum(np.abs(a) ** 2 for a in args)
        x = np.asarray(args[0], dtype=complex)
        if n.fn in ("log", "sqrt"):
            _positive_real(x, points, n.fn, strict=n.fn == "log")
            return getattr(np, n.fn)(x.real).astype(complex)
        return getattr(np, n.fn)(x)

    return ev(e)


def _bad_point(mask, points):
    idx = np.unravel_index(int(np.argmax(mask)), np.shape(mask)) if np.ndim(mask) else ()
    if points is None:
        return tuple(int(i) for i in idx)
    if not idx:  # constant subexpression: every point is bad, report the first
        return tuple(float(np.ravel(p)[0]) for p in points)
    return tuple(float(p[idx]) for p in points)


def _nonzero(x, points, fn):
    bad = np.asarray(x) == 0
    if np.any(bad):
        raise DomainError(_bad_point(bad, points), fn)


def _positive_real(x, points, fn, strict):
    scale = max(float(np.max(np.abs(x), initial=0.0)), 1.0)
    bad = (np.abs(x.imag) > 1e-12 * scale) | ((x.real <= 0) if strict else (x.real < 0))
    if np.any(bad):
        raise DomainError(_bad_point(bad, points), fn)


def evaluate(e, chart, params: dict | None = None):
    """ScalarField of e on the chart's grid."""
    from .grid import ScalarField

    if isinstance(e, str):
        e = parse(e)
    mesh = chart.mesh()
    coords = dict(zip(chart.names, mesh))
    resolve(e, set(coords) | set(params or {}))
    vals = evaluate_values(e, coords, params, points=mesh)
    return ScalarField(chart, np.broadcast_to(np.asarray(vals, dtype=complex), chart.shape).copy())


def to_poly(e, chart, params: dict | None = None):
    """Exact Laurent polynomial (fiskit.logforms.Poly) of an expression in z1.., zb1.., t1..

    Only + - * integer powers and division by monomials are allowed; numbers
    are converted through Fraction(str(value)).
    """
    from fractions import Fraction

    from .logforms import Poly

    if isinstance(e, str):
        e = parse(e)
    params = params or {}
    varidx = {nm: k for k, nm in enumerate(chart.names)}

    def ev(n):
        if isinstance(n, Num):
            return chart.const(Fraction(_num(n.value)))
        if isinstance(n, Name):
            if n.name in varidx:
                return chart.var(varidx[n.name])
            if n.name in params:
                return chart.const(Fraction(str(params[n.name])))
            raise ExprError(f"identifier {n.name!r} is not a polynomial variable")
        if isinstance(n, Neg):
            return -ev(n.operand)
        if isinstance(n, BinOp):
            if n.op == "^":
                k = _integer_exponent(n.right, params)
                base = ev(n.left)
                if k >= 0:
                    return base**k
                return _monomial_inverse(base) ** (-k)
            a, b = ev(n.left), ev(n.right)
            if n.op == "+":
                return a + b
            if n.op == "-":
                return a - b
            if n.op == "*":
                return a * b
            return a * _monomial_inverse(b)
        raise ExprError(f"function {n.fn} is not allowed in exact polynomial data")

    def _monomial_inverse(p: Poly) -> Poly:
        if len(p.terms) != 1:
            raise ExprError("division only by monomials")
        (ex, c), = p.terms.items()
        return Poly(chart, {tuple(-a for a in ex): 1 / c})

    return ev(e)
