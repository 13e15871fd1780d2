"""Weighted discrete complexes: assembly, adjoints, estimates, solves and ranks."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import norm as spnorm

from .forms import multi_indices, sort_sign
from .grid import Chart, bump_profile, periodic_distance, random_trig_field
from .structure import (
    BasicBundle,
    FIStructure,
    MNTOperator,
    QuotientOperator,
    StructureForms,
    check_levi_flat,
    commutator_coefficients,
)

CLIP = 40.0


class NotClosed(ValueError):
    def __init__(self, residual):
        super().__init__(f"right-hand side is not closed: relative residual {residual:.3e}")
        self.residual = residual


class IllConditioned(RuntimeError):
    def __init__(self, estimate, iterations):
        super().__init__(f"CG stalled after {iterations} iterations (condition estimate {estimate:.3e})")
        self.estimate, self.iterations = estimate, iterations


class ClippedSupport(ValueError):
    pass


class UnclassifiedStructure(ValueError):
    pass


class DiscreteComplex:
    """Matrices D_q of an operator family with diagonal weights W_q.

    `weight` is the exponent (phi or chi(phi)) on the grid; it is clipped to
    [-clip, clip] before exponentiation.
    """

    def __init__(self, op, weight=None, clip: float = CLIP):
        self.op = op
        self.S: FIStructure = op.S
        ch = self.S.chart
        w = np.zeros(ch.shape) if weight is None else np.asarray(weight, dtype=float)
        if w.shape != ch.shape:
            raise ValueError("weight shape does not match the chart")
        self.clipped = np.abs(w) >= clip
        self.exponent = np.clip(w, -clip, clip)
        self.w = np.exp(-self.exponent).ravel() * ch.cell_volume
        self._D: dict = {}

    @property
    def n(self) -> int:
        return self.S.n

    @property
    def components(self) -> int:
        return getattr(self.op, "rank", 1)

    def ncomp(self, q: int) -> int:
        return self.components * comb(self.n, q) if 0 <= q <= self.n else 0

    def dim(self, q: int) -> int:
        return self.ncomp(q) * self.S.chart.size

    def D(self, q: int) -> sp.csr_matrix:
        if q not in self._D:
            if 0 <= q <= self.n:
                self._D[q] = self.op.matrix(q).tocsr()
            else:
                self._D[q] = sp.csr_matrix((self.dim(q + 1), self.dim(q)), dtype=complex)
        return self._D[q]

    def weights(self, q: int) -> np.ndarray:
        return np.tile(self.w, self.ncomp(q))

    def inner(self, q: int, u, v) -> complex:
        return complex(np.sum(self.weights(q) * np.ravel(u) * np.conj(np.ravel(v))))

    def norm(self, q: int, u) -> float:
        return float(np.sqrt(np.sum(self.weights(q) * np.abs(np.ravel(u)) ** 2)))

    def adjoint(self, q: int) -> sp.csr_matrix:
        """W_q^{-1} D_q^H W_{q+1}."""
        return (sp.diags(1.0 / self.weights(q)) @ self.D(q).conj().T @ sp.diags(self.weights(q + 1))).tocsr()

    def composition_norm(self, q: int) -> float:
        A, B = self.D(q), self.D(q + 1)
        if A.shape[0] == 0 or B.shape[0] == 0:
            return 0.0
        denom = spnorm(A) * spnorm(B)
        return float(spnorm(B @ A) / denom) if denom else 0.0

    def check_support(self, u) -> None:
        u = np.reshape(u, (-1,) + self.S.chart.shape)
        live = np.any(np.abs(u) > 0, axis=0)
        if np.any(live & self.clipped):
            raise ClippedSupport("data support meets the clipped region of the weight")


def assemble(S: FIStructure, forms: StructureForms | None = None, twist=None, bundle: BasicBundle | None = None,
             weight=None, clip: float = CLIP) -> DiscreteComplex:
    return DiscreteComplex(MNTOperator(S, forms, twist, bundle), weight, clip)


def assemble_quotient(S: FIStructure, twist=None, weight=None, clip: float = CLIP) -> DiscreteComplex:
    return DiscreteComplex(QuotientOperator(S, twist), weight, clip)


# solving -------------------------------------------------------------------

@dataclass
class SolveReport:
    residual: float  # relative normal-equation residual ||A^H r|| / ||A^H b||
    solution_norm: float
    obstruction: float  # ||f - D u||_W, the component of f off the range
    iterations: int
    f_norm: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("residual", "solution_norm", "obstruction", "iterations", "f_norm")}


def cgls(A, b: np.ndarray, tol: float = 1e-13, maxiter: int | None = None, col_scale: np.ndarray | None = None):
    """Least-squares solve min ||Ax - b|| from x = 0 (minimum-norm limit).

    With `col_scale` the iteration runs on A diag(col_scale) (Jacobi scaling).
    """
    if col_scale is not None:
        A = A @ sp.diags(col_scale)
    n = A.shape[1]
    maxiter = maxiter or 10 * max(n, 1)
    x = np.zeros(n, dtype=complex)
    r = b.astype(complex).copy()
    s = A.conj().T @ r
    p = s.copy()
    gamma = np.vdot(s, s).real
    s0 = np.sqrt(gamma)
    # A^H b at rounding level means b is orthogonal to the range
    floor = 1e-14 * spnorm(A) * np.linalg.norm(b)
    if s0 <= floor:
        return x, 0.0, 0
    alphas = []
    it = 0
    while it < maxiter:
        it += 1
        qv = A @ p
        qq = np.vdot(qv, qv).real
        if qq == 0:
            break
        alpha = gamma / qq
        alphas.append(alpha)
        x += alpha * p
        r -= alpha * qv
        s = A.conj().T @ r
        gnew = np.vdot(s, s).real
        if np.sqrt(gnew) <= max(tol * s0, floor):
            gamma = gnew
            break
        p = s + (gnew / gamma) * p
        gamma = gnew
    else:
        est = max(alphas) / min(alphas) if alphas else np.inf
        raise IllConditioned(float(np.sqrt(est)), it)
    if col_scale is not None:
        x = col_scale * x
    return x, float(np.sqrt(gamma) / s0), it


def solve(C: DiscreteComplex, q: int, f, tol: float = 1e-13, closed_tol: float = 1e-8,
          precondition: bool = False, method: str = "cg", maxiter: int | None = None):
    """Minimum-W-norm u with D_{q-1} u = projection of f onto the range.

    method "cg" runs CGLS on W^{1/2} D W^{-1/2}; "direct" uses a dense SVD
    least-squares solve, for weights whose dynamic range defeats CG.
    """
    if not 1 <= q <= C.n:
        raise ValueError(f"q must lie in 1..{C.n}")
    if method not in ("cg", "direct"):
        raise ValueError(f"unknown method {method!r}")
    fv = np.ravel(np.asarray(f, dtype=complex))
    fn = C.norm(q, fv)
    if q < C.n and fn > 0:
        rel = C.norm(q + 1, C.D(q) @ fv) / max(fn * _opnorm_est(C, q), 1e-300)
        if rel > closed_tol:
            raise NotClosed(rel)
    D = C.D(q - 1)
    wl, wr = np.sqrt(C.weights(q)), np.sqrt(C.weights(q - 1))
    A = (sp.diags(wl) @ D @ sp.diags(1.0 / wr)).tocsr()
    b = wl * fv
    if method == "direct":
        Ad = A.toarray()
        x = scipy.linalg.lstsq(Ad, b, cond=1e-14, lapack_driver="gelsd")[0]
        s = Ad.conj().T @ (b - Ad @ x)
        s0 = np.linalg.norm(Ad.conj().T @ b)
        rel, it = (float(np.linalg.norm(s) / s0) if s0 else 0.0), 0
    else:
        scale = None
        if precondition:
            cn = np.sqrt(np.asarray(abs(A).power(2).sum(axis=0))).ravel()
            scale = 1.0 / np.where(cn > 0, cn, 1.0)
        x, rel, it = cgls(A, b, tol, maxiter=maxiter, col_scale=scale)
    u = x / wr
    obstruction = C.norm(q, fv - D @ u)
    return u.reshape((C.ncomp(q - 1),) + C.S.chart.shape), SolveReport(rel, C.norm(q - 1, u), obstruction, it, fn)


def _opnorm_est(C: DiscreteComplex, q: int, iters: int = 30) -> float:
    """Power-iteration estimate of the weighted operator norm of D_q."""
    D = C.D(q)
    if D.shape[0] == 0:
        return 1.0
    rng = np.random.default_rng(0)
    x = rng.standard_normal(D.shape[1]) + 0j
    wl, wr = np.sqrt(C.weights(q + 1)), np.sqrt(C.weights(q))
    A = sp.diags(wl) @ D @ sp.diags(1.0 / wr)
    s = 1.0
    for _ in range(iters):
        y = A.conj().T @ (A @ x)
        s = np.linalg.norm(y)
        if s == 0:
            return 1.0
        x = y / s
    return float(np.sqrt(s))


# estimates -----------------------------------------------------------------

def random_test_form(chart: Chart, rng: np.random.Generator, ncomp: int, center, radius: float,
                     degree: int = 2) -> np.ndarray:
    cut = bump_profile(periodic_distance(chart, center) / radius)
    return np.array([cut * random_trig_field(chart, rng, degree) for _ in range(ncomp)])


@dataclass
class BochnerReport:
    lhs: float
    q_term: float
    grad_term: float
    remainder: float
    G: float
    norm: float

    @property
    def C_hat(self) -> float:
        return abs(self.remainder) / (self.G * self.norm) if self.G * self.norm > 0 else 0.0

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("lhs", "q_term", "grad_term", "remainder", "G", "norm")}
        d["C_hat"] = self.C_hat
        return d


def bochner_check(C: DiscreteComplex, q: int, g, e=None) -> BochnerReport:
    """Compare ||Dg||^2 + ||delta g||^2 with the Q-term plus the gradient term (rank-1 bundles)."""
    S = C.S
    n = S.n
    g = np.asarray(g, dtype=complex).reshape((comb(n, q),) + S.chart.shape)
    phi = C.exponent.astype(complex)
    wgrid = C.w.reshape(S.chart.shape)
    gv = g.ravel()
    lhs = C.norm(q + 1, C.D(q) @ gv) ** 2 if q < n else 0.0
    if q >= 1:
        lhs += C.norm(q - 1, C.adjoint(q - 1) @ gv) ** 2
    grad = sum(np.sum(np.abs(S.apply_X(j, g[a])) ** 2 * wgrid) for a in range(g.shape[0]) for j in range(n))
    qterm = 0.0
    if q >= 1:
        if e is None:
            e = commutator_coefficients(S).e
        Xb = np.array([S.apply_Xbar(l, phi) for l in range(n)])
        H = np.empty((n, n) + S.chart.shape, dtype=complex)
        for j in range(n):
            for k in range(n):
                H[j, k] = S.apply_X(j, Xb[k]) + np.einsum("l...,l...->...", e[j, k], Xb)
        posq = {J: r for r, J in enumerate(multi_indices(n, q))}

        def gjK(j, K):
            s, J = sort_sign((j,) + K)
            return s * g[posq[J]] if s else 0.0

        for K in multi_indices(n, q - 1):
            for j in range(n):
                for k in range(n):
                    qterm += np.real(np.sum(H[j, k] * gjK(k, K) * np.conj(gjK(j, K)) * wgrid))
    nrm = C.norm(q, gv)
    G = float(np.sqrt(grad + nrm**2))
    return BochnerReport(float(lhs), float(qterm), float(grad), float(lhs - qterm - grad), G, nrm)


@dataclass
class AprioriReport:
    pass_rate: float
    worst_slack: float
    slacks: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"pass_rate": self.pass_rate, "worst_slack": self.worst_slack, "samples": len(self.slacks)}


def apriori_check(C: DiscreteComplex, q: int, samples, slack: float = -1e-8) -> AprioriReport:
    """Fraction of samples with ||g||^2 <= ||T* g||^2 + ||S g||^2 (relative slack)."""
    Tstar = C.adjoint(q - 1)
    Sq = C.D(q)
    out = []
    for g in samples:
        C.check_support(g)
        gv = np.ravel(g)
        lhs = C.norm(q, gv) ** 2
        rhs = C.norm(q - 1, Tstar @ gv) ** 2 + (C.norm(q + 1, Sq @ gv) ** 2 if q < C.n else 0.0)
        out.append((rhs - lhs) / lhs)
    ok = [s >= slack for s in out]
    return AprioriReport(float(np.mean(ok)) if ok else 1.0, float(min(out)) if out else 0.0, out)


# leafwise cohomology -------------------------------------------------------

def numerical_rank(M, rel: float = 1e-8) -> int:
    if min(M.shape) == 0:
        return 0
    s = np.linalg.svd(M.toarray() if sp.issparse(M) else M, compute_uv=False)
    return int(np.sum(s > rel * s[0])) if s[0] > 0 else 0


def classify(S: FIStructure, tol: float = 1e-8) -> str:
    rep = check_levi_flat(S, tol)
    lo, hi = rep.details["rank_min"], rep.details["rank_max"]
    if lo == hi == S.n:
        return "essentially_real"
    if lo == hi == 2 * S.n:
        return "levi_flat_cr"
    raise UnclassifiedStructure(f"V + Vbar has rank {lo}..{hi} for n = {S.n}")


@dataclass
class RankReport:
    kind: str
    q: int
    dim: int
    dim_ker: int
    dim_im: int
    defect: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def leafwise_cohomology(S: FIStructure, twist=None, q: int = 0) -> RankReport:
    kind = classify(S)
    C = assemble_quotient(S, twist)
    dim = C.dim(q)
    out_rank = numerical_rank(C.D(q)) if q < S.n else 0
    in_rank = numerical_rank(C.D(q - 1)) if q >= 1 else 0
    ker = dim - out_rank
    return RankReport(kind, q, dim, ker, in_rank, ker - in_rank)


def export_matrix_market(C: DiscreteComplex, directory, degrees=None) -> list:
    """Write D_q as D{q}.mtx and the diagonal of W_q as W{q}.mtx (dense column array)."""
    import pathlib

    import scipy.io

    out = pathlib.Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for q in degrees if degrees is not None else range(C.n + 1):
        if q < C.n:
            p = out / f"D{q}.mtx"
            scipy.io.mmwrite(p, C.D(q), comment=f"D_{q}: (m,{q}) -> (m,{q + 1}) coefficients, component-major")
            paths.append(p)
        p = out / f"W{q}.mtx"
        scipy.io.mmwrite(p, C.weights(q)[:, None], comment=f"diagonal of W_{q}")
        paths.append(p)
    return paths


def chi_weight(S: FIStructure, phi, q: int, region, t_points: int = 64, e=None):
    """Weight chi(phi) whose Q-form has q-sums >= 1 on `region` (Psi = 0, C_eps = 0 branch).

    Returns (weight array, ChiFunction, lam) with lam the sum of the q smallest
    eigenvalues of the Q-form of phi.
    """
    from .convexity import construct_chi, lowest_sum_eigs, q_form

    phi = np.real(np.asarray(phi))
    region = np.asarray(region, bool)
    lam = lowest_sum_eigs(q_form(S, phi, e), q)
    if np.any(lam[region] <= 0):
        raise ValueError("phi is not strictly q-convex on the region")
    t = np.linspace(phi[region].min(), phi[region].max(), t_points)
    chi = construct_chi(phi[region], {"lam": lam[region]}, t)
    return chi(phi), chi, lam
