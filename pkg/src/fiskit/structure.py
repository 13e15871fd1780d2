"""Formally integrable structures, structure forms, and the twisted complexes.

The combined frame is ordered (P_1..P_m, X_1..X_n), so the dual coframe reads
(theta^1..theta^m, omega^1..omega^n) and Theta ^ omega^J is the coframe basis
element with index (0..m-1) + (m + J) and sign +1.  Pointwise norms of
(m,q)-forms are taken in the metric for which this coframe is orthonormal.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import comb

import numpy as np
import scipy.sparse as sp

from .forms import (
    CoFrame,
    Form,
    change_basis,
    dual_coframe,
    exterior_derivative,
    index_of,
    multi_indices,
    pointwise_rank,
    sort_sign,
    to_coordinates,
    wedge,
)
from .grid import Chart, ScalarField, VectorField, apply_vector_array, gradient_array, lie_bracket
from .sparse_ops import diag, vector_matrix


class InfeasibleDecomposition(ValueError):
    def __init__(self, point, residual):
        super().__init__(f"bracket decomposition infeasible at {point}: residual {residual:.3e}")
        self.point, self.residual = point, residual


class InvalidTwist(ValueError):
    def __init__(self, residual):
        super().__init__(f"twist is not closed modulo the conormal ideal: residual {residual:.3e}")
        self.residual = residual


class StructureNotIntegrable(ValueError):
    pass


class PreconditionError(ValueError):
    pass


def _pinv_solve(A: np.ndarray, b: np.ndarray, rcond: float = 1e-10):
    """Pointwise least-norm solve. A: (*grid, r, c), b: (*grid, r)."""
    pinv = np.linalg.pinv(A, rcond=rcond)
    x = np.einsum("...cr,...r->...c", pinv, b)
    resid = np.linalg.norm(b - np.einsum("...rc,...c->...r", A, x), axis=-1)
    return x, resid


class FIStructure:
    def __init__(self, chart: Chart, V, P, name: str = "", theta_basic: bool = True, tol: float = 1e-8):
        V, P = list(V), list(P)
        if len(V) + len(P) != chart.dim:
            raise ValueError(f"n + m = {len(V) + len(P)} does not match chart dimension {chart.dim}")
        self.chart, self.V, self.P, self.name = chart, V, P, name
        self.theta_basic = theta_basic
        self.coframe: CoFrame = dual_coframe(P + V, tol=tol)

    @property
    def n(self) -> int:
        return len(self.V)

    @property
    def m(self) -> int:
        return len(self.P)

    @cached_property
    def X(self) -> np.ndarray:
        """V-frame components, shape (n, dim, *grid)."""
        if not self.V:
            return np.zeros((0, self.chart.dim) + self.chart.shape, dtype=complex)
        return np.array([v.components for v in self.V])

    def theta(self, l: int) -> Form:
        return self.coframe.covector(l)

    def omega(self, j: int) -> Form:
        return self.coframe.covector(self.m + j)

    def apply_X(self, j: int, values: np.ndarray) -> np.ndarray:
        return apply_vector_array(self.X[j], values, self.chart)

    def apply_Xbar(self, j: int, values: np.ndarray) -> np.ndarray:
        return apply_vector_array(self.X[j].conj(), values, self.chart)

    @cached_property
    def X_matrices(self) -> list:
        return [vector_matrix(self.chart, self.X[j]) for j in range(self.n)]

    @cached_property
    def bracket_coefficients(self) -> np.ndarray:
        """c[j, k, l] with [X_j, X_k] = sum_l c X_l (pointwise least squares)."""
        n, ch = self.n, self.chart
        out = np.zeros((n, n, n) + ch.shape, dtype=complex)
        A = np.moveaxis(self.X, (0, 1), (-1, -2))
        for j in range(n):
            for k in range(j + 1, n):
                br = lie_bracket(self.V[j], self.V[k]).components
                x, _ = _pinv_solve(A, np.moveaxis(br, 0, -1))
                out[j, k] = np.moveaxis(x, -1, 0)
                out[k, j] = -out[j, k]
        return out

    def __repr__(self):
        return f"FIStructure({self.name!r}, n={self.n}, m={self.m}, shape={self.chart.shape})"


@dataclass
class Report:
    passed: bool
    residual: float = 0.0
    details: dict = field(default_factory=dict)


def check_formal_integrability(S: FIStructure, tol: float = 1e-8) -> Report:
    worst = 0.0
    A = np.moveaxis(S.X, (0, 1), (-1, -2))
    for j in range(S.n):
        for k in range(j + 1, S.n):
            br = lie_bracket(S.V[j], S.V[k]).components
            _, res = _pinv_solve(A, np.moveaxis(br, 0, -1))
            worst = max(worst, float(res.max()))
    return Report(worst < tol, worst)


def check_levi_flat(S: FIStructure, tol: float = 1e-8) -> Report:
    lo, hi = pointwise_rank(S.V + [v.conj() for v in S.V], tol)
    return Report(lo == hi, 0.0, {"rank_min": lo, "rank_max": hi})


@dataclass
class CommutatorCoefficients:
    d: np.ndarray  # d[j, k, l]
    e: np.ndarray  # e[j, k, l]
    residual: float
    kernel_dim: tuple[int, int]


def commutator_coefficients(S: FIStructure, tol: float = 1e-8) -> CommutatorCoefficients:
    """Least-norm solve of [X_j, Xbar_k] = sum d X_l - sum e Xbar_l."""
    n, ch = S.n, S.chart
    cols = np.concatenate([S.X, -S.X.conj()], axis=0)
    A = np.moveaxis(cols, (0, 1), (-1, -2))
    sv = np.linalg.svd(A, compute_uv=False)
    rank = np.sum(sv > 1e-10 * np.maximum(sv[..., :1], 1e-300), axis=-1)
    d = np.zeros((n, n, n) + ch.shape, dtype=complex)
    e = np.zeros_like(d)
    worst = 0.0
    for j in range(n):
        for k in range(n):
            br = lie_bracket(S.V[j], S.V[k].conj()).components
            x, res = _pinv_solve(A, np.moveaxis(br, 0, -1))
            if res.max() > tol:
                idx = int(np.argmax(res))
                raise InfeasibleDecomposition(ch.point(idx), float(res.flat[idx]))
            worst = max(worst, float(res.max()))
            d[j, k] = np.moveaxis(x[..., :n], -1, 0)
            e[j, k] = np.moveaxis(x[..., n:], -1, 0)
    kdim = 2 * n - rank
    return CommutatorCoefficients(d, e, worst, (int(kdim.min()), int(kdim.max())))


@dataclass
class StructureForms:
    alpha: np.ndarray  # alpha[j, l, b]: coframe-basis coefficients of theta_l^j
    residual: float
    coframe: CoFrame

    def form(self, j: int, l: int) -> Form:
        return to_coordinates(Form(self.coframe.chart, 1, self.alpha[j, l], self.coframe))

    def trace(self) -> Form:
        m = self.alpha.shape[0]
        tot = sum(self.alpha[l, l] for l in range(m)) if m else np.zeros((self.coframe.size,) + self.coframe.chart.shape)
        return to_coordinates(Form(self.coframe.chart, 1, tot, self.coframe))


def structure_forms(S: FIStructure, tol: float = 1e-8) -> StructureForms:
    """Least-norm 1-forms with d theta^j = sum_l theta_l^j ^ theta^l."""
    N, m, ch = ch_dim(S), S.m, S.chart
    pos = index_of(N, 2)
    M = np.zeros((comb(N, 2), m * N))
    for l in range(m):
        for b in range(N):
            s, K = sort_sign((b, l))
            if s:
                M[pos[K], l * N + b] = s
    Mp = np.linalg.pinv(M)
    alpha = np.zeros((m, m, N) + ch.shape, dtype=complex)
    worst = 0.0
    for j in range(m):
        rhs = change_basis(exterior_derivative(S.theta(j)), S.coframe).coeffs
        sol = np.einsum("ur,r...->u...", Mp, rhs)
        res = rhs - np.einsum("ru,u...->r...", M, sol)
        worst = max(worst, float(np.max(np.abs(res), initial=0.0)))
        alpha[j] = sol.reshape((m, N) + ch.shape)
    if worst > tol:
        raise StructureNotIntegrable(f"structure-form residual {worst:.3e}")
    return StructureForms(alpha, worst, S.coframe)


def ch_dim(S: FIStructure) -> int:
    return S.chart.dim


def xi_form(S: FIStructure, forms: StructureForms) -> Form:
    if not S.theta_basic:
        raise PreconditionError("Theta is not declared a basic section of the canonical bundle")
    return forms.trace()


def xi_operator(S: FIStructure, forms: StructureForms):
    xi = xi_form(S, forms)
    return lambda u: wedge(xi, u)


@dataclass
class TwistForm:
    form: Form
    valid: bool
    residual: float


def check_twist(S: FIStructure, vartheta: Form | None, tol: float = 1e-8) -> TwistForm:
    if vartheta is None:
        return TwistForm(Form.zero(S.chart, 1), True, 0.0)
    if vartheta.basis is not None:
        vartheta = to_coordinates(vartheta)
    dv = change_basis(exterior_derivative(vartheta), S.coframe)
    m = S.m
    bad = [r for r, K in enumerate(multi_indices(S.chart.dim, 2)) if K[0] >= m]
    res = float(np.max(np.abs(dv.coeffs[bad]), initial=0.0)) if bad else 0.0
    if res > tol:
        raise InvalidTwist(res)
    return TwistForm(vartheta, True, res)


def is_basic_scalar(S: FIStructure, f: ScalarField, tol: float = 1e-8) -> bool:
    return all(np.max(np.abs(S.apply_X(j, f.values))) < tol for j in range(S.n))


def is_basic_form(S: FIStructure, u: Form, tol: float = 1e-8) -> bool:
    """True when u lies in the exterior algebra of the theta's with basic coefficients.

    Meaningful in normal-form charts, where the theta's are the closed dz's.
    """
    c = change_basis(u, S.coframe)
    for r, K in enumerate(multi_indices(S.chart.dim, u.degree)):
        if any(k >= S.m for k in K):
            if np.max(np.abs(c.coeffs[r])) > tol:
                return False
        elif not is_basic_scalar(S, ScalarField(S.chart, c.coeffs[r]), tol):
            return False
    return True


@dataclass
class BasicBundle:
    """Rank-r bundle with transition matrices keyed by (alpha, beta) label pairs."""

    rank: int = 1
    labels: tuple = ("U",)
    transitions: dict = field(default_factory=dict)

    def transition(self, a, b, chart: Chart) -> np.ndarray:
        if a == b:
            return np.broadcast_to(np.eye(self.rank).reshape((self.rank, self.rank) + (1,) * chart.dim),
                                   (self.rank, self.rank) + chart.shape).astype(complex)
        if (a, b) in self.transitions:
            return self.transitions[(a, b)]
        if (b, a) in self.transitions:
            return np.moveaxis(np.linalg.inv(np.moveaxis(self.transitions[(b, a)], (0, 1), (-2, -1))), (-2, -1), (0, 1))
        raise KeyError((a, b))

    def cocycle_residual(self, chart: Chart) -> float:
        worst = 0.0
        for a in self.labels:
            for b in self.labels:
                for c in self.labels:
                    gab, gbc, gac = (self.transition(x, y, chart) for x, y in ((a, b), (b, c), (a, c)))
                    prod = np.einsum("ij...,jk...->ik...", gab, gbc)
                    worst = max(worst, float(np.max(np.abs(prod - gac))))
        return worst

    def basic_residual(self, S: FIStructure) -> float:
        worst = 0.0
        for g in self.transitions.values():
            for entry in np.reshape(g, (-1,) + S.chart.shape):
                for j in range(S.n):
                    worst = max(worst, float(np.max(np.abs(S.apply_X(j, entry)))))
        return worst


def theta_wedge_omega(S: FIStructure, J) -> Form:
    """Theta ^ omega^J in coordinates."""
    N = S.chart.dim
    K = tuple(range(S.m)) + tuple(S.m + j for j in J)
    c = np.zeros((comb(N, len(K)),) + S.chart.shape, dtype=complex)
    c[index_of(N, len(K))[K]] = 1.0
    return to_coordinates(Form(S.chart, len(K), c, S.coframe))


def expand_mq(S: FIStructure, q: int, g: np.ndarray) -> Form:
    """Coordinate form Theta ^ sum_J g_J omega^J from coefficients g[J]."""
    N = S.chart.dim
    c = np.zeros((comb(N, S.m + q),) + S.chart.shape, dtype=complex)
    pos = index_of(N, S.m + q)
    for r, J in enumerate(multi_indices(S.n, q)):
        c[pos[tuple(range(S.m)) + tuple(S.m + j for j in J)]] = g[r]
    return to_coordinates(Form(S.chart, S.m + q, c, S.coframe))


def extract_mq(S: FIStructure, u: Form) -> tuple[np.ndarray, float]:
    """Coefficients of u on Theta ^ omega^K plus the size of everything else."""
    q = u.degree - S.m
    c = change_basis(u, S.coframe).coeffs
    pos = index_of(S.chart.dim, u.degree)
    keep = [pos[tuple(range(S.m)) + tuple(S.m + k for k in K)] for K in multi_indices(S.n, q)]
    rest = np.delete(c, keep, axis=0)
    return c[keep], float(np.max(np.abs(rest), initial=0.0))


def _vector_index_table(n: int, q: int):
    """(j, J-row, K-row, sign) with omega^j ^ omega^J = sign * omega^K."""
    out = []
    pos = index_of(n, q + 1)
    for a, J in enumerate(multi_indices(n, q)):
        for j in range(n):
            s, K = sort_sign((j,) + J)
            if s:
                out.append((j, a, pos[K], s))
    return out


class MNTOperator:
    """d_{V,theta} = d - Xi - theta^ on (m,q)-forms, in frame coefficients.

    Coefficient arrays have shape (r, C(n,q), *grid) for a rank-r bundle in a
    single basic trivialization.
    """

    def __init__(self, S: FIStructure, forms: StructureForms | None = None, twist: Form | None = None,
                 bundle: BasicBundle | None = None, tol: float = 1e-8):
        self.S = S
        self.forms = forms if forms is not None else structure_forms(S, tol)
        self.twist = check_twist(S, twist, tol).form
        self.bundle = bundle or BasicBundle()
        self.xi = xi_form(S, self.forms)
        self._zero: dict = {}
        self.leakage = 0.0

    @property
    def rank(self) -> int:
        return self.bundle.rank

    def dim(self, q: int) -> int:
        return self.rank * comb(self.S.n, q) * self.S.chart.size if 0 <= q <= self.S.n else 0

    def zero_order(self, q: int) -> np.ndarray:
        """c[K, J] such that the non-derivative part of the output is sum_J c[K, J] g_J."""
        if q not in self._zero:
            S = self.S
            nq, nq1 = comb(S.n, q), comb(S.n, q + 1)
            c = np.zeros((nq1, nq) + S.chart.shape, dtype=complex)
            if nq1:
                for a, J in enumerate(multi_indices(S.n, q)):
                    base = theta_wedge_omega(S, J)
                    w = exterior_derivative(base) - wedge(self.xi, base) - wedge(self.twist, base)
                    coef, leak = extract_mq(S, w)
                    self.leakage = max(self.leakage, leak)
                    c[:, a] = coef
            self._zero[q] = c
        return self._zero[q]

    def apply(self, q: int, g: np.ndarray) -> np.ndarray:
        S = self.S
        g = np.asarray(g, dtype=complex)
        squeeze = g.ndim == S.chart.dim + 1
        if squeeze:
            g = g[None]
        out = np.zeros((g.shape[0], comb(S.n, q + 1)) + S.chart.shape, dtype=complex)
        sgn = (-1) ** S.m
        for j, a, r, s in _vector_index_table(S.n, q):
            out[:, r] += sgn * s * np.stack([S.apply_X(j, g[i, a]) for i in range(g.shape[0])])
        out += np.einsum("kj...,ij...->ik...", self.zero_order(q), g)
        return out[0] if squeeze else out

    def apply_reference(self, q: int, g: np.ndarray) -> np.ndarray:
        """Same operator computed entirely with the exterior algebra (rank 1)."""
        if q >= self.S.n:
            return np.zeros((0,) + self.S.chart.shape, dtype=complex)
        u = expand_mq(self.S, q, g)
        w = exterior_derivative(u) - wedge(self.xi, u) - wedge(self.twist, u)
        return extract_mq(self.S, w)[0]

    def matrix(self, q: int) -> sp.csr_matrix:
        S = self.S
        npts = S.chart.size
        nq, nq1 = comb(S.n, q), comb(S.n, q + 1)
        blocks = [[None] * nq for _ in range(nq1)]
        sgn = (-1) ** S.m
        for j, a, r, s in _vector_index_table(S.n, q):
            term = (sgn * s) * S.X_matrices[j]
            blocks[r][a] = term if blocks[r][a] is None else blocks[r][a] + term
        z = self.zero_order(q)
        for r in range(nq1):
            for a in range(nq):
                if np.any(z[r, a] != 0):
                    blocks[r][a] = diag(z[r, a]) if blocks[r][a] is None else blocks[r][a] + diag(z[r, a])
        if nq1 == 0:
            M = sp.csr_matrix((0, nq * npts), dtype=complex)
        else:
            for r in range(nq1):
                for a in range(nq):
                    if blocks[r][a] is None:
                        blocks[r][a] = sp.csr_matrix((npts, npts), dtype=complex)
            M = sp.bmat(blocks, format="csr")
        if self.rank > 1:
            M = sp.kron(sp.identity(self.rank, format="csr"), M, format="csr")
        return M


def bv_difference(S: FIStructure, f: np.ndarray, q: int, g: np.ndarray) -> np.ndarray:
    """Zero-order discrepancy f^{-1} df ^ g between the operator in a non-basic
    frame e.f and the operator in the basic frame e, on rank-r coefficients g.
    """
    r = f.shape[0]
    fm = np.moveaxis(f, (0, 1), (-2, -1))
    finv = np.moveaxis(np.linalg.inv(fm), (-2, -1), (0, 1))
    df = np.stack([np.stack([gradient_array(f[i, k], S.chart) for k in range(r)]) for i in range(r)])
    conn = np.einsum("ij...,jkn...->ikn...", finv, df)  # dx_nu coefficients of f^{-1} df
    out = np.zeros((r, comb(S.n, q + 1)) + S.chart.shape, dtype=complex)
    for i in range(r):
        for k in range(r):
            alpha = Form(S.chart, 1, conn[i, k])
            for a, J in enumerate(multi_indices(S.n, q)):
                base = theta_wedge_omega(S, J).scale(g[k, a])
                out[i] += extract_mq(S, wedge(alpha, base))[0]
    return out


def quotient_project(S: FIStructure, u: Form) -> np.ndarray:
    c = change_basis(u, S.coframe).coeffs
    pos = index_of(S.chart.dim, u.degree)
    return np.array([c[pos[tuple(S.m + k for k in K)]] for K in multi_indices(S.n, u.degree)]) \
        if u.degree <= S.n else np.zeros((0,) + S.chart.shape, dtype=complex)


class QuotientOperator:
    """d''_theta on Lambda^q V* coefficients (Chevalley-Eilenberg form)."""

    def __init__(self, S: FIStructure, twist: Form | None = None, tol: float = 1e-8):
        self.S = S
        tw = check_twist(S, twist, tol).form
        # [theta](X_j) = theta(X_j)
        self.tw = np.einsum("jn...,n...->j...", S.X, tw.coeffs) if S.n else np.zeros((0,) + S.chart.shape)

    def dim(self, q: int) -> int:
        return comb(self.S.n, q) * self.S.chart.size if 0 <= q <= self.S.n else 0

    def _terms(self, q: int):
        """Yield (K-row, kind, data, J-row, sign)."""
        S, n = self.S, self.S.n
        pos = index_of(n, q)
        c = S.bracket_coefficients
        for r, K in enumerate(multi_indices(n, q + 1)):
            for i, k in enumerate(K):
                rest = K[:i] + K[i + 1:]
                yield r, "X", k, pos[rest], (-1) ** i
                yield r, "tw", self.tw[k], pos[rest], -((-1) ** i)
            for i in range(len(K)):
                for j in range(i + 1, len(K)):
                    rest = tuple(x for t, x in enumerate(K) if t not in (i, j))
                    for l in range(n):
                        s, L = sort_sign((l,) + rest)
                        if s:
                            yield r, "c", c[K[i], K[j], l], pos[L], s * (-1) ** (i + j)

    def apply(self, q: int, v: np.ndarray) -> np.ndarray:
        S = self.S
        out = np.zeros((comb(S.n, q + 1),) + S.chart.shape, dtype=complex)
        for r, kind, data, a, s in self._terms(q):
            if kind == "X":
                out[r] += s * S.apply_X(data, v[a])
            else:
                out[r] += s * data * v[a]
        return out

    def matrix(self, q: int) -> sp.csr_matrix:
        S = self.S
        npts = S.chart.size
        nq, nq1 = comb(S.n, q), comb(S.n, q + 1)
        if nq1 == 0:
            return sp.csr_matrix((0, nq * npts), dtype=complex)
        blocks = [[sp.csr_matrix((npts, npts), dtype=complex) for _ in range(nq)] for _ in range(nq1)]
        for r, kind, data, a, s in self._terms(q):
            blocks[r][a] = blocks[r][a] + (s * S.X_matrices[data] if kind == "X" else diag(s * data))
        return sp.bmat(blocks, format="csr")


def phi_iso(S: FIStructure, q: int, g: np.ndarray) -> np.ndarray:
    """Theta ^ v (x) sigma  ->  (-1)^{qm} v; the sign map is its own inverse."""
    return (-1) ** (q * S.m) * np.asarray(g)
