"""Differential forms on a chart, in coordinate or coframe bases."""
from __future__ import annotations

from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np

from .grid import Chart, ChartMismatch, ScalarField, VectorField, _as_values, diff_array


class FrameDegenerate(ValueError):
    def __init__(self, point, singular_value):
        super().__init__(f"frame degenerate at {point}: smallest singular value {singular_value:.3e}")
        self.point = point
        self.singular_value = singular_value


class BasisMismatch(ValueError):
    pass


@lru_cache(maxsize=None)
def multi_indices(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    return tuple(combinations(range(n), k))


@lru_cache(maxsize=None)
def index_of(n: int, k: int) -> dict:
    return {I: r for r, I in enumerate(multi_indices(n, k))}


def sort_sign(seq) -> tuple[int, tuple[int, ...]]:
    """Sign of the permutation sorting `seq` (0 if an entry repeats) and the sorted tuple."""
    seq = list(seq)
    if len(set(seq)) < len(seq):
        return 0, ()
    inv = sum(1 for i in range(len(seq)) for j in range(i + 1, len(seq)) if seq[i] > seq[j])
    return (-1) ** inv, tuple(sorted(seq))


@lru_cache(maxsize=None)
def wedge_table(n: int, k1: int, k2: int):
    out = []
    pos = index_of(n, k1 + k2)
    for a, I in enumerate(multi_indices(n, k1)):
        for b, J in enumerate(multi_indices(n, k2)):
            s, K = sort_sign(I + J)
            if s:
                out.append((a, b, pos[K], s))
    return tuple(out)


@lru_cache(maxsize=None)
def d_table(n: int, k: int):
    out = []
    pos = index_of(n, k + 1)
    for a, I in enumerate(multi_indices(n, k)):
        for nu in range(n):
            s, K = sort_sign((nu,) + I)
            if s:
                out.append((a, nu, pos[K], s))
    return tuple(out)


@lru_cache(maxsize=None)
def contraction_table(n: int, k: int):
    out = []
    pos = index_of(n, k - 1)
    for a, I in enumerate(multi_indices(n, k)):
        for r, nu in enumerate(I):
            out.append((a, nu, pos[I[:r] + I[r + 1:]], (-1) ** r))
    return tuple(out)


class Form:
    """Coefficients stacked as (C(N, k), *grid) over increasing multi-indices.

    `basis` is None for coordinate differentials, otherwise the CoFrame whose
    covectors are the basis.
    """

    __slots__ = ("chart", "degree", "coeffs", "basis")

    def __init__(self, chart: Chart, degree: int, coeffs, basis=None):
        N = chart.dim
        if not 0 <= degree <= N:
            raise ValueError(f"degree {degree} outside 0..{N}")
        c = np.array(coeffs, dtype=complex)
        if c.shape != (comb(N, degree),) + chart.shape:
            raise ValueError(f"coefficient array has shape {c.shape}")
        c.setflags(write=False)
        self.chart, self.degree, self.coeffs, self.basis = chart, degree, c, basis

    @classmethod
    def zero(cls, chart: Chart, degree: int, basis=None) -> "Form":
        return cls(chart, degree, np.zeros((comb(chart.dim, degree),) + chart.shape), basis)

    @classmethod
    def from_terms(cls, chart: Chart, degree: int, terms: dict, basis=None) -> "Form":
        c = np.zeros((comb(chart.dim, degree),) + chart.shape, dtype=complex)
        pos = index_of(chart.dim, degree)
        for I, f in terms.items():
            s, K = sort_sign(I)
            if s == 0 or len(K) != degree:
                raise ValueError(f"bad multi-index {I}")
            c[pos[K]] += s * _as_values(chart, f)
        return cls(chart, degree, c, basis)

    @classmethod
    def scalar(cls, f: ScalarField) -> "Form":
        return cls(f.chart, 0, f.values[None])

    @classmethod
    def one_form(cls, chart: Chart, components, basis=None) -> "Form":
        return cls(chart, 1, [_as_values(chart, c) for c in components], basis)

    def coefficient(self, I) -> ScalarField:
        return ScalarField(self.chart, self.coeffs[index_of(self.chart.dim, self.degree)[tuple(I)]])

    def _compat(self, o: "Form"):
        if self.chart != o.chart:
            raise ChartMismatch("forms live on different charts")
        if self.basis is not o.basis:
            raise BasisMismatch("mixed-basis arithmetic")
        if self.degree != o.degree:
            raise ValueError("degree mismatch")

    def __add__(self, o: "Form") -> "Form":
        self._compat(o)
        return Form(self.chart, self.degree, self.coeffs + o.coeffs, self.basis)

    def __sub__(self, o: "Form") -> "Form":
        self._compat(o)
        return Form(self.chart, self.degree, self.coeffs - o.coeffs, self.basis)

    def __neg__(self):
        return Form(self.chart, self.degree, -self.coeffs, self.basis)

    def scale(self, f) -> "Form":
        return Form(self.chart, self.degree, self.coeffs * _as_values(self.chart, f), self.basis)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2) * self.chart.cell_volume))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs), initial=0.0))

    def __repr__(self):
        tag = "coord" if self.basis is None else "frame"
        return f"Form(degree={self.degree}, basis={tag}, max|c|={self.max_abs():.3g})"


def wedge(a: Form, b: Form) -> Form:
    if a.chart != b.chart:
        raise ChartMismatch("forms live on different charts")
    if a.basis is not b.basis:
        raise BasisMismatch("mixed-basis wedge")
    N = a.chart.dim
    k = a.degree + b.degree
    if k > N:
        raise ValueError(f"degree overflow: {a.degree} + {b.degree} > {N}")
    out = np.zeros((comb(N, k),) + a.chart.shape, dtype=complex)
    for i, j, r, s in wedge_table(N, a.degree, b.degree):
        out[r] += s * a.coeffs[i] * b.coeffs[j]
    return Form(a.chart, k, out, a.basis)


def exterior_derivative(a: Form) -> Form:
    if a.basis is not None:
        a = to_coordinates(a)
    N = a.chart.dim
    if a.degree >= N:
        raise ValueError("exterior derivative of a top-degree form leaves the algebra")
    out = np.zeros((comb(N, a.degree + 1),) + a.chart.shape, dtype=complex)
    for i, nu, r, s in d_table(N, a.degree):
        out[r] += s * diff_array(a.coeffs[i], a.chart, nu)
    return Form(a.chart, a.degree + 1, out)


def interior_product(X: VectorField, a: Form) -> Form:
    if X.chart != a.chart:
        raise ChartMismatch("vector field and form on different charts")
    if a.degree == 0:
        raise ValueError("interior product of a 0-form")
    if a.basis is not None:
        a = to_coordinates(a)
    N = a.chart.dim
    out = np.zeros((comb(N, a.degree - 1),) + a.chart.shape, dtype=complex)
    for i, nu, r, s in contraction_table(N, a.degree):
        out[r] += s * X.components[nu] * a.coeffs[i]
    return Form(a.chart, a.degree - 1, out)


def compound(M: np.ndarray, k: int) -> np.ndarray:
    """k-th compound of a pointwise matrix field M with shape (N, N, *grid)."""
    N = M.shape[0]
    idx = multi_indices(N, k)
    grid = M.shape[2:]
    out = np.empty((len(idx), len(idx)) + grid, dtype=complex)
    if k == 0:
        out[...] = 1.0
        return out
    Mg = np.moveaxis(M, (0, 1), (-2, -1))
    for a, B in enumerate(idx):
        rows = Mg[..., list(B), :]
        for b, I in enumerate(idx):
            out[a, b] = np.linalg.det(rows[..., list(I)])
    return out


class CoFrame:
    """Ordered frame of vector fields together with its pointwise dual coframe.

    `frame[b, nu]` is the d/dx_nu component of frame vector b and
    `covectors[b, nu]` the dx_nu coefficient of covector b.
    """

    def __init__(self, chart: Chart, frame: np.ndarray, covectors: np.ndarray):
        self.chart = chart
        self.frame = frame
        self.covectors = covectors
        self._compounds: dict = {}

    @property
    def size(self) -> int:
        return self.frame.shape[0]

    def covector(self, b: int) -> Form:
        return Form(self.chart, 1, self.covectors[b])

    def vector(self, b: int) -> VectorField:
        return VectorField(self.chart, self.frame[b])

    def pairing_error(self) -> float:
        P = np.einsum("an...,bn...->ab...", self.frame, self.covectors)
        eye = np.eye(self.size).reshape((self.size, self.size) + (1,) * self.chart.dim)
        return float(np.max(np.abs(P - eye)))

    def compound(self, k: int, which: str) -> np.ndarray:
        key = (k, which)
        if key not in self._compounds:
            M = self.frame if which == "frame" else self.covectors
            self._compounds[key] = compound(M, k)
        return self._compounds[key]


def _frame_array(chart: Chart, vectors) -> np.ndarray:
    arrs = []
    for v in vectors:
        if v.chart != chart:
            raise ChartMismatch("frame vectors on different charts")
        arrs.append(v.components)
    return np.array(arrs)


def dual_coframe(frame, tol: float = 1e-8) -> CoFrame:
    chart = frame[0].chart
    F = _frame_array(chart, frame)
    if F.shape[0] != chart.dim:
        raise ValueError(f"frame needs {chart.dim} vectors, got {F.shape[0]}")
    Mg = np.moveaxis(F, (0, 1), (-2, -1))
    sv = np.linalg.svd(Mg, compute_uv=False)[..., -1]
    worst = int(np.argmin(sv))
    if sv.flat[worst] < tol:
        raise FrameDegenerate(chart.point(worst), float(sv.flat[worst]))
    # rows of the frame matrix are vectors; the coframe matrix is its inverse transposed
    inv = np.linalg.inv(Mg)
    E = np.moveaxis(np.swapaxes(inv, -1, -2), (-2, -1), (0, 1))
    return CoFrame(chart, F, E)


def pointwise_rank(vectors, tol: float = 1e-8) -> tuple[int, int]:
    chart = vectors[0].chart
    F = _frame_array(chart, vectors)
    sv = np.linalg.svd(np.moveaxis(F, (0, 1), (-1, -2)), compute_uv=False)
    r = np.sum(sv > tol, axis=-1)
    return int(r.min()), int(r.max())


def change_basis(a: Form, coframe: CoFrame) -> Form:
    if a.chart != coframe.chart:
        raise ChartMismatch("coframe on a different chart")
    if a.basis is coframe:
        return a
    if a.basis is not None:
        a = to_coordinates(a)
    C = coframe.compound(a.degree, "frame")
    return Form(a.chart, a.degree, np.einsum("bi...,i...->b...", C, a.coeffs), coframe)


def to_coordinates(a: Form) -> Form:
    if a.basis is None:
        return a
    C = a.basis.compound(a.degree, "cov")
    return Form(a.chart, a.degree, np.einsum("bi...,b...->i...", C, a.coeffs))


def d_scalar(f: ScalarField) -> Form:
    return exterior_derivative(Form.scalar(f))
