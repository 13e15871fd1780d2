"""Exact calculus of basic and logarithmic forms on elliptic normal charts.

Coefficients are Laurent polynomials with Fraction coefficients in the
variables (z_1..z_m, zbar_1..zbar_m, t_1..t_k); negative exponents are only
allowed in the z's.  Forms carry dz-differentials only, which is all a basic
form can contain.  Indices are 0-based: z_1 is variable 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import prod

import numpy as np

from .forms import sort_sign
from .grid import Chart, VectorField
from .structure import FIStructure


class NotClosed(ValueError):
    pass


class NotDivisible(ValueError):
    def __init__(self, witness):
        super().__init__(f"monomial {witness} is not divisible")
        self.witness = witness


class NotLogarithmic(ValueError):
    def __init__(self, condition: str):
        super().__init__(f"not a logarithmic form: {condition}")
        self.condition = condition


class NonSmoothDivisor(ValueError):
    pass


@dataclass(frozen=True)
class NormalChart:
    """Complex pairs z_1..z_m and real t_1..t_k; the V-frame is {d/dzbar_rho, d/dt_tau}."""

    m: int
    k: int = 0

    @property
    def nvars(self) -> int:
        return 2 * self.m + self.k

    @property
    def names(self) -> list:
        m = self.m
        return ([f"z{i + 1}" for i in range(m)] + [f"zb{i + 1}" for i in range(m)]
                + [f"t{i + 1}" for i in range(self.k)])

    def var(self, i: int) -> "Poly":
        e = [0] * self.nvars
        e[i] = 1
        return Poly(self, {tuple(e): Fraction(1)})

    def z(self, i: int) -> "Poly":
        return self.var(i)

    def zbar(self, i: int) -> "Poly":
        return self.var(self.m + i)

    def t(self, i: int) -> "Poly":
        return self.var(2 * self.m + i)

    def const(self, c) -> "Poly":
        return Poly(self, {(0,) * self.nvars: Fraction(c)} if c else {})

    def structure(self, resolution: int = 16) -> FIStructure:
        """The same chart as a periodic grid structure (coordinates x_1, y_1, ..., t)."""
        names = [f"{a}{i + 1}" for i in range(self.m) for a in "xy"] + [f"t{i + 1}" for i in range(self.k)]
        ch = Chart.torus(len(names), resolution, names=names)
        dim = ch.dim

        def vec(pairs):
            c = [0j] * dim
            for i, v in pairs:
                c[i] = v
            return VectorField(ch, c)

        V = [vec([(2 * r, 0.5), (2 * r + 1, 0.5j)]) for r in range(self.m)]
        V += [vec([(2 * self.m + s, 1.0)]) for s in range(self.k)]
        P = [vec([(2 * r, 0.5), (2 * r + 1, -0.5j)]) for r in range(self.m)]
        return FIStructure(ch, V, P, f"normal_chart_{self.m}_{self.k}")


class Poly:
    """Sparse Laurent polynomial {exponent tuple: Fraction}."""

    __slots__ = ("chart", "terms")

    def __init__(self, chart: NormalChart, terms: dict | None = None):
        self.chart = chart
        self.terms = {e: Fraction(c) for e, c in (terms or {}).items() if c != 0}

    # arithmetic
    def __add__(self, o):
        o = self._lift(o)
        out = dict(self.terms)
        for e, c in o.terms.items():
            out[e] = out.get(e, 0) + c
        return Poly(self.chart, out)

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.chart, {e: -c for e, c in self.terms.items()})

    def __sub__(self, o):
        return self + (-self._lift(o))

    def __rsub__(self, o):
        return self._lift(o) - self

    def __mul__(self, o):
        o = self._lift(o)
        out: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in o.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0) + c1 * c2
        return Poly(self.chart, out)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        out = self.chart.const(1)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, o):
        if isinstance(o, (int, Fraction)):
            o = self.chart.const(o)
        return isinstance(o, Poly) and self.terms == o.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def _lift(self, o):
        return o if isinstance(o, Poly) else self.chart.const(o)

    def __bool__(self):
        return bool(self.terms)

    def __repr__(self):
        return f"Poly({format_poly(self)})"

    # calculus and substitutions
    def diff(self, i: int) -> "Poly":
        out = {}
        for e, c in self.terms.items():
            if e[i]:
                f = list(e)
                f[i] -= 1
                out[tuple(f)] = c * e[i]
        return Poly(self.chart, out)

    def at_zero(self, i: int) -> "Poly":
        """Substitute variable i = 0 (variable must appear with non-negative powers)."""
        if any(e[i] < 0 for e in self.terms):
            raise ValueError(f"pole in variable {self.chart.names[i]}")
        return Poly(self.chart, {e: c for e, c in self.terms.items() if e[i] == 0})

    def shift(self, i: int, by: int) -> "Poly":
        """Multiply by z_i^by."""
        out = {}
        for e, c in self.terms.items():
            f = list(e)
            f[i] += by
            out[tuple(f)] = c
        return Poly(self.chart, out)

    def scaled_by_degree(self, fn) -> "Poly":
        """Replace each coefficient c of z^alpha by c * fn(|alpha|_z)."""
        m = self.chart.m
        return Poly(self.chart, {e: c * fn(sum(e[:m])) for e, c in self.terms.items()})

    def is_regular(self) -> bool:
        return all(min(e, default=0) >= 0 for e in self.terms)

    def is_holomorphic(self) -> bool:
        m = self.chart.m
        return all(not any(e[m:]) for e in self.terms)

    def is_constant(self) -> bool:
        return all(not any(e) for e in self.terms)

    def constant_term(self) -> Fraction:
        return self.terms.get((0,) * self.chart.nvars, Fraction(0))

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def evaluate(self, values) -> complex:
        return sum(complex(c) * prod(complex(v) ** a for v, a in zip(values, e)) for e, c in self.terms.items())

    def recharted(self, chart: NormalChart, index_map) -> "Poly":
        """Move to another chart; index_map sends old variable index -> new index (or None if exponent 0)."""
        out = {}
        for e, c in self.terms.items():
            f = [0] * chart.nvars
            for i, a in enumerate(e):
                if a:
                    j = index_map(i)
                    if j is None:
                        raise ValueError(f"variable {self.chart.names[i]} has no image")
                    f[j] = a
            out[tuple(f)] = c
        return Poly(chart, out)


def format_poly(p: Poly) -> str:
    if not p.terms:
        return "0"
    parts = []
    for e, c in sorted(p.terms.items(), reverse=True):
        mono = "*".join(n if a == 1 else f"{n}^{a}" for n, a in zip(p.chart.names, e) if a)
        if not mono:
            parts.append(str(c))
        elif c == 1:
            parts.append(mono)
        elif c == -1:
            parts.append("-" + mono)
        else:
            parts.append(f"{c}*{mono}")
    return " + ".join(parts).replace("+ -", "- ")


def random_poly(chart: NormalChart, rng: np.random.Generator, degree: int, nterms: int = 4,
                holomorphic: bool = True, vars_=None) -> Poly:
    """Random polynomial with small integer coefficients and total degree <= degree."""
    vars_ = list(range(chart.m if holomorphic else chart.nvars)) if vars_ is None else list(vars_)
    out = {}
    for _ in range(nterms):
        e = [0] * chart.nvars
        for _ in range(int(rng.integers(0, degree + 1))):
            e[vars_[int(rng.integers(len(vars_)))]] += 1
        out[tuple(e)] = out.get(tuple(e), 0) + Fraction(int(rng.integers(-5, 6)), int(rng.integers(1, 4)))
    return Poly(chart, out)


# forms in dz ----------------------------------------------------------------

@dataclass
class PForm:
    """sum_P f_P dz_P over increasing tuples P of z-indices."""

    chart: NormalChart
    degree: int
    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for P, f in self.terms.items():
            P = tuple(P)
            if len(P) != self.degree or list(P) != sorted(set(P)):
                raise ValueError(f"bad multi-index {P}")
            if f:
                clean[P] = f
        self.terms = clean

    @classmethod
    def function(cls, f: Poly) -> "PForm":
        return cls(f.chart, 0, {(): f})

    @classmethod
    def dz(cls, chart: NormalChart, *idx) -> "PForm":
        s, P = sort_sign(tuple(idx))
        if s == 0:
            return cls(chart, len(idx))
        return cls(chart, len(idx), {P: chart.const(s)})

    def coefficient(self, P) -> Poly:
        return self.terms.get(tuple(P), self.chart.const(0))

    def __add__(self, o: "PForm") -> "PForm":
        if o.degree != self.degree:
            raise ValueError("degree mismatch")
        out = dict(self.terms)
        for P, f in o.terms.items():
            out[P] = out[P] + f if P in out else f
        return PForm(self.chart, self.degree, out)

    def __neg__(self):
        return PForm(self.chart, self.degree, {P: -f for P, f in self.terms.items()})

    def __sub__(self, o):
        return self + (-o)

    def scale(self, f) -> "PForm":
        f = f if isinstance(f, Poly) else self.chart.const(f)
        return PForm(self.chart, self.degree, {P: f * c for P, c in self.terms.items()})

    def __eq__(self, o):
        return isinstance(o, PForm) and self.degree == o.degree and (self - o).is_zero()

    def is_zero(self) -> bool:
        return not self.terms

    def is_regular(self) -> bool:
        return all(f.is_regular() for f in self.terms.values())

    def __repr__(self):
        if not self.terms:
            return "0"
        return " + ".join(f"({format_poly(f)})" + "".join(f" dz{i + 1}" for i in P) for P, f in sorted(self.terms.items()))


def wedge(a: PForm, b: PForm) -> PForm:
    out: dict = {}
    for P, f in a.terms.items():
        for R, g in b.terms.items():
            s, K = sort_sign(P + R)
            if s:
                out[K] = out.get(K, a.chart.const(0)) + (f * g) * s
    return PForm(a.chart, a.degree + b.degree, out)


def d(f: PForm) -> PForm:
    """Holomorphic exterior derivative sum_rho d f_P/dz_rho dz_rho ^ dz_P.

    Exact d for basic forms; the dzbar and dt components vanish there.
    """
    out: dict = {}
    for P, c in f.terms.items():
        for r in range(f.chart.m):
            s, K = sort_sign((r,) + P)
            if s:
                g = c.diff(r)
                if g:
                    out[K] = out.get(K, f.chart.const(0)) + g * s
    return PForm(f.chart, f.degree + 1, out)


def is_basic_pform(f: PForm, chart: NormalChart | None = None, tol: float = 0.0) -> bool:
    """Every coefficient annihilated by d/dzbar and d/dt (exact for polynomial data)."""
    return all(c.is_holomorphic() for c in f.terms.values())


def contract_euler(f: PForm) -> PForm:
    """xi -| f with xi = sum z_rho d/dz_rho."""
    out: dict = {}
    for P, c in f.terms.items():
        for i, r in enumerate(P):
            K = P[:i] + P[i + 1:]
            out[K] = out.get(K, f.chart.const(0)) + (c * f.chart.z(r)) * (-1) ** i
    return PForm(f.chart, f.degree - 1, out)


def homotopy(f: PForm) -> PForm:
    """K f = xi -| sum (int_0^1 s^{p-1} f_P(s z) ds) dz_P on polynomial basic data."""
    if f.degree < 1:
        raise ValueError("homotopy needs degree >= 1")
    if not (f.is_regular() and is_basic_pform(f)):
        raise ValueError("homotopy needs basic polynomial coefficients")
    p = f.degree
    integ = PForm(f.chart, p, {P: c.scaled_by_degree(lambda a: Fraction(1, a + p)) for P, c in f.terms.items()})
    return contract_euler(integ)


def poincare_homotopy(f: PForm) -> PForm:
    """Primitive g of a closed basic polynomial form: d g = f."""
    if not d(f).is_zero():
        raise NotClosed("d f != 0")
    return homotopy(f)


def divide_by_coords(F: Poly, rho: int) -> Poly:
    """G with F = z_1 ... z_rho * G, exact."""
    out = {}
    for e, c in sorted(F.terms.items()):
        if any(e[i] < 1 for i in range(rho)):
            raise NotDivisible(format_poly(Poly(F.chart, {e: c})))
        f = list(e)
        for i in range(rho):
            f[i] -= 1
        out[tuple(f)] = c
    return Poly(F.chart, out)


# logarithmic forms ----------------------------------------------------------

@dataclass(frozen=True)
class NCHypersurface:
    """D = {z_1 ... z_a = 0}."""

    chart: NormalChart
    a: int

    def __post_init__(self):
        if not 1 <= self.a <= self.chart.m:
            raise ValueError(f"a must lie in 1..{self.chart.m}")

    @property
    def F(self) -> Poly:
        out = self.chart.const(1)
        for i in range(self.a):
            out = out * self.chart.z(i)
        return out

    @property
    def smooth(self) -> bool:
        return self.a == 1


def _pole_factor(chart: NormalChart, P, a: int) -> Poly:
    """prod_{rho in P, rho < a} z_rho."""
    out = chart.const(1)
    for r in P:
        if r < a:
            out = out * chart.z(r)
    return out


@dataclass
class LogPForm:
    """sum_P c_P omega_P with omega_rho = dz_rho/z_rho for rho < a and dz_rho otherwise.

    The c_P are basic polynomials.  `a` = 0 means a plain basic form.
    """

    chart: NormalChart
    a: int
    degree: int
    coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for P, c in self.coeffs.items():
            P = tuple(P)
            if len(P) != self.degree or list(P) != sorted(set(P)):
                raise ValueError(f"bad multi-index {P}")
            if c and not (c.is_regular() and c.is_holomorphic()):
                raise NotLogarithmic(f"generator coefficient {format_poly(c)} is not basic")
            if c:
                clean[P] = c
        self.coeffs = clean

    def to_form(self) -> PForm:
        """Coordinate Laurent form sum_P c_P / (prod_{rho in P, rho < a} z_rho) dz_P."""
        out = {}
        for P, c in self.coeffs.items():
            for r in P:
                if r < self.a:
                    c = c.shift(r, -1)
            out[P] = c
        return PForm(self.chart, self.degree, out)

    def __add__(self, o: "LogPForm") -> "LogPForm":
        if (o.a, o.degree) != (self.a, self.degree):
            raise ValueError("mismatched log forms")
        out = dict(self.coeffs)
        for P, c in o.coeffs.items():
            out[P] = out[P] + c if P in out else c
        return LogPForm(self.chart, self.a, self.degree, out)

    def __neg__(self):
        return LogPForm(self.chart, self.a, self.degree, {P: -c for P, c in self.coeffs.items()})

    def __sub__(self, o):
        return self + (-o)

    def __eq__(self, o):
        return isinstance(o, LogPForm) and self.to_form() == o.to_form()

    def is_zero(self) -> bool:
        return not self.coeffs

    def is_constant(self) -> bool:
        return all(c.is_constant() for c in self.coeffs.values())

    def __repr__(self):
        if not self.coeffs:
            return "0"

        def gen(r):
            return f"dz{r + 1}/z{r + 1}" if r < self.a else f"dz{r + 1}"

        return " + ".join(f"({format_poly(c)})" + "".join(" " + gen(r) for r in P) for P, c in sorted(self.coeffs.items()))


def log_generator(D: NCHypersurface, *idx) -> LogPForm:
    """omega_{idx} with sign from sorting."""
    s, P = sort_sign(tuple(idx))
    return LogPForm(D.chart, D.a, len(idx), {P: D.chart.const(s)} if s else {})


def log_wedge(a: LogPForm, b: LogPForm) -> LogPForm:
    if a.a != b.a:
        raise ValueError("different divisors")
    out: dict = {}
    for P, f in a.coeffs.items():
        for R, g in b.coeffs.items():
            s, K = sort_sign(P + R)
            if s:
                out[K] = out.get(K, a.chart.const(0)) + (f * g) * s
    return LogPForm(a.chart, a.a, a.degree + b.degree, out)


def from_coordinates(f: PForm, D: NCHypersurface) -> LogPForm:
    """Generator-basis coefficients c_P = f_P * prod_{rho in P, rho < a} z_rho (must come out basic)."""
    return LogPForm(f.chart, D.a, f.degree, {P: c * _pole_factor(f.chart, P, D.a) for P, c in f.terms.items()})


@dataclass
class Membership:
    member: bool
    form: LogPForm | None
    violated: str | None = None

    def __bool__(self):
        return self.member


def log_membership(f: PForm, D: NCHypersurface) -> Membership:
    """Check that F f and F d f are basic and regular; expand in the generator basis."""
    F = D.F
    Ff = f.scale(F)
    if not is_basic_pform(Ff):
        return Membership(False, None, "F f is not basic")
    if not Ff.is_regular():
        return Membership(False, None, "F f is not regular")
    Fdf = d(f).scale(F)
    if not Fdf.is_regular():
        return Membership(False, None, "F df is not regular")
    try:
        return Membership(True, from_coordinates(f, D))
    except NotLogarithmic as exc:  # cannot happen for members; kept as a guard
        return Membership(False, None, exc.condition)


def log_d(f: LogPForm) -> LogPForm:
    D = NCHypersurface(f.chart, f.a) if f.a else None
    g = d(f.to_form())
    return from_coordinates(g, D) if D else LogPForm(f.chart, 0, g.degree, g.terms)


def log_decompose(f: LogPForm, rho: int | None = None) -> tuple[LogPForm, LogPForm]:
    """f = (dz_rho/z_rho) ^ f' + f'' with f' free of z_rho and omega_rho (rho defaults to a-1)."""
    rho = f.a - 1 if rho is None else rho
    if not 0 <= rho < f.a:
        raise ValueError("rho must index a log coordinate")
    fp: dict = {}
    fpp: dict = {}
    for P, c in f.coeffs.items():
        if rho in P:
            i = P.index(rho)
            R = P[:i] + P[i + 1:]
            c0 = c.at_zero(rho)
            if c0:
                fp[R] = fp.get(R, f.chart.const(0)) + c0 * (-1) ** i
            rest = c - c0
            if rest:
                fpp[P] = rest
        else:
            fpp[P] = c
    return LogPForm(f.chart, f.a, f.degree - 1, fp), LogPForm(f.chart, f.a, f.degree, fpp)


def recompose(fp: LogPForm, fpp: LogPForm, rho: int) -> LogPForm:
    return log_wedge(log_generator(NCHypersurface(fp.chart, fp.a), rho), fp) + fpp


def _lower_divisor(f: LogPForm) -> LogPForm:
    """Re-express a form whose omega_{a-1} coefficients vanish on z_{a-1} = 0 along {z_1...z_{a-1} = 0}."""
    r = f.a - 1
    out = {}
    for P, c in f.coeffs.items():
        out[P] = _divide_var(c, r) if r in P else c
    return LogPForm(f.chart, r, f.degree, out)


def _divide_var(c: Poly, r: int) -> Poly:
    for e in c.terms:
        if e[r] < 1:
            raise NotDivisible(format_poly(Poly(c.chart, {e: c.terms[e]})))
    return c.shift(r, -1)


def _raise_divisor(f: LogPForm, a: int) -> LogPForm:
    """Same form viewed along {z_1...z_a = 0} for a >= f.a."""
    return from_coordinates(f.to_form(), NCHypersurface(f.chart, a))


def residue(f: LogPForm) -> PForm:
    """f' restricted to z_1 = 0, as a basic form on D (variables z_2..z_m, t)."""
    if f.a != 1:
        raise NonSmoothDivisor("residue needs D = {z_1 = 0}")
    fp, _ = log_decompose(f, 0)
    return restrict_to_D(fp.to_form())


def _drop_first(chart: NormalChart) -> tuple[NormalChart, callable]:
    sub = NormalChart(chart.m - 1, chart.k)
    m = chart.m

    def idx(i):
        if i == 0 or i == m:
            return None
        return i - 1 if i < m else (i - 2 if i < 2 * m else i - 2)

    return sub, idx


def restrict_to_D(f: PForm) -> PForm:
    sub, idx = _drop_first(f.chart)
    out = {}
    for P, c in f.terms.items():
        if 0 in P:
            continue
        out[tuple(r - 1 for r in P)] = c.at_zero(0).recharted(sub, idx)
    return PForm(sub, f.degree, out)


def extend_from_D(target: PForm, D: NCHypersurface) -> LogPForm:
    """(dz_1/z_1) ^ (constant-in-z_1 lift of target)."""
    if not D.smooth:
        raise NonSmoothDivisor("extension needs D = {z_1 = 0}")
    chart = D.chart
    if target.chart != NormalChart(chart.m - 1, chart.k):
        raise ValueError("target lives on the wrong chart")
    m = chart.m

    def idx(i):
        return i + 1 if i < m - 1 else (i + 2 if i < 2 * (m - 1) else i + 2)

    out = {}
    for P, c in target.terms.items():
        out[(0,) + tuple(r + 1 for r in P)] = c.recharted(chart, idx)
    return LogPForm(chart, 1, target.degree + 1, out)


def twist_sD(f: LogPForm | PForm, D: NCHypersurface) -> tuple[PForm, str]:
    """Top-degree log form -> (F f, "[D]")."""
    if isinstance(f, PForm):
        mem = log_membership(f, D)
        if not mem:
            raise NotLogarithmic(mem.violated)
        f = mem.form
    if f.degree != D.chart.m:
        raise ValueError("twist_sD needs top degree m")
    if f.a != D.a:
        raise ValueError("form and divisor disagree")
    return f.to_form().scale(D.F), "[D]"


def untwist_sD(g: PForm, D: NCHypersurface) -> LogPForm:
    """Inverse of twist_sD: divide a regular basic top form by F."""
    if g.degree != D.chart.m or not (g.is_regular() and is_basic_pform(g)):
        raise NotLogarithmic("input is not a regular basic top-degree form")
    P = tuple(range(D.chart.m))
    return LogPForm(D.chart, D.a, g.degree, {P: g.coefficient(P)} if g.coefficient(P) else {})


@dataclass
class Reduction:
    constants: LogPForm
    primitive: LogPForm | None

    @property
    def count(self) -> int:
        return len(self.constants.coeffs)


def reduce_to_constants(f: LogPForm) -> Reduction:
    """f = f_const + d(primitive) with f_const a constant combination of wedges of dz/z's."""
    if not log_d(f).is_zero():
        raise NotClosed("d f != 0")
    return _reduce(f)


def _reduce(f: LogPForm) -> Reduction:
    chart, p = f.chart, f.degree
    if p == 0:
        c = f.coeffs.get((), chart.const(0))
        if not c.is_constant():
            raise NotClosed("closed 0-form must be constant")
        return Reduction(f, None)
    if f.a == 0:
        if not d(f.to_form()).is_zero():
            raise NotClosed("d f != 0")
        g = homotopy(f.to_form())
        return Reduction(LogPForm(chart, 0, p), LogPForm(chart, 0, p - 1, g.terms))
    a = f.a
    r = a - 1
    fp, fpp = log_decompose(f, r)
    fp_low = LogPForm(chart, r, p - 1, fp.coeffs)  # no omega_r terms and free of z_r
    fpp_low = _lower_divisor(fpp)
    red1 = _reduce(fp_low)
    red2 = _reduce(fpp_low)
    wr = log_generator(NCHypersurface(chart, a), r)
    const = log_wedge(wr, _raise_divisor(red1.constants, a)) + _raise_divisor(red2.constants, a)
    prim = LogPForm(chart, a, p - 1)
    if red2.primitive is not None:
        prim = prim + _raise_divisor(red2.primitive, a)
    if red1.primitive is not None:
        prim = prim - log_wedge(wr, _raise_divisor(red1.primitive, a))
    return Reduction(const, prim)
