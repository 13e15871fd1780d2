"""Quadratic forms Q, critical masks, convexity verdicts and the weight constructions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Chart, gradient_array
from .structure import CommutatorCoefficients, FIStructure, commutator_coefficients


class NoRealDirection(ValueError):
    pass


class UnboundedSup(ValueError):
    def __init__(self, t, which):
        super().__init__(f"{which}(t) is unbounded at t = {t:.6g}")
        self.t, self.which = t, which


def _grid_last(M: np.ndarray) -> np.ndarray:
    """(a, b, *grid) -> (*grid, a, b)."""
    return np.moveaxis(M, (0, 1), (-2, -1))


def real_intersection_basis(S: FIStructure, tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal real basis of V cap Vbar at each point.

    Returns (basis, rank) with basis of shape (*grid, dim, n); columns past the
    pointwise rank are zero.
    """
    n, dim = S.n, S.chart.dim
    B = np.moveaxis(S.X, (0, 1), (-1, -2))  # (*grid, dim, n)
    M = np.concatenate([B, -B.conj()], axis=-1)
    _, s, vh = np.linalg.svd(M, full_matrices=True)
    svals = np.zeros(M.shape[:-2] + (2 * n,))
    svals[..., : s.shape[-1]] = s
    null = svals <= tol * np.maximum(svals[..., :1], 1.0)  # (*grid, 2n)
    a = vh.conj()[..., :, :n]  # rows are right singular vectors
    vecs = np.einsum("...dn,...kn->...dk", B, a) * null[..., None, :]
    W = np.concatenate([vecs.real, vecs.imag], axis=-1)
    u, sw, _ = np.linalg.svd(W, full_matrices=False)
    rank = np.sum(sw > tol, axis=-1)
    k = min(n, u.shape[-1])
    basis = u[..., :, :k] * (np.arange(k) < rank[..., None])[..., None, :]
    out = np.zeros(S.chart.shape + (dim, n))
    out[..., :k] = basis
    return out, rank


@dataclass
class CriticalSets:
    K: np.ndarray
    C: np.ndarray


def critical_sets(S: FIStructure, phi: np.ndarray, tol: float = 1e-6) -> CriticalSets:
    phi = _real(phi)
    grad = gradient_array(phi.astype(complex), S.chart)  # (dim, *grid)
    Xphi = np.einsum("jn...,n...->j...", S.X, grad)
    C = np.all(np.abs(Xphi) <= tol, axis=0) if S.n else np.ones(S.chart.shape, bool)
    basis, _ = real_intersection_basis(S)
    vphi = np.einsum("...dk,d...->...k", basis, grad)
    K = np.all(np.abs(vphi) <= tol, axis=-1) | C
    return CriticalSets(K, C)


def _real(phi, tol: float = 1e-12) -> np.ndarray:
    phi = np.asarray(getattr(phi, "values", phi))
    if np.iscomplexobj(phi):
        if np.max(np.abs(phi.imag), initial=0.0) > tol:
            raise ValueError("weight must be real-valued")
        phi = phi.real
    return phi


@dataclass
class LineBundleMetric:
    """Weights per trivialization, basic cocycle, and a power tau >= 1."""

    weights: dict
    cocycle: dict = field(default_factory=dict)
    tau: int = 1

    def discrepancy(self) -> float:
        worst = 0.0
        for (a, b), g in self.cocycle.items():
            d = self.weights[a] - self.weights[b] - np.log(np.abs(g) ** 2)
            worst = max(worst, float(np.max(np.abs(d))))
        return worst

    def base_weight(self) -> np.ndarray:
        return _real(next(iter(self.weights.values())))


@dataclass
class QFormField:
    matrix: np.ndarray  # (n, n, *grid), Hermitian in the first two axes

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def at(self, mask: np.ndarray) -> np.ndarray:
        return _grid_last(self.matrix)[mask]


def q_form(S: FIStructure, phi, e: np.ndarray | CommutatorCoefficients | None = None) -> QFormField:
    """Re(X_j Xbar_k phi + sum_l e_jk^l Xbar_l phi), Hermitian-symmetrized.

    A LineBundleMetric with power tau yields tau times the tau = 1 field.
    """
    if isinstance(phi, LineBundleMetric):
        base = q_form(S, phi.base_weight(), e)
        return QFormField(phi.tau * base.matrix)
    phi = _real(phi).astype(complex)
    if e is None:
        e = commutator_coefficients(S)
    if isinstance(e, CommutatorCoefficients):
        e = e.e
    n = S.n
    Xb_phi = np.array([S.apply_Xbar(l, phi) for l in range(n)])
    H = np.empty((n, n) + S.chart.shape, dtype=complex)
    for j in range(n):
        for k in range(n):
            H[j, k] = S.apply_X(j, Xb_phi[k]) + np.einsum("l...,l...->...", e[j, k], Xb_phi)
    M = 0.5 * (H + np.conj(np.swapaxes(H, 0, 1)))
    return QFormField(M)


def eig_stats(Q, subspace: np.ndarray | None = None, tol: float = 1e-9):
    """Per-point (n_plus, n_zero, n_minus) of the Hermitian form, optionally restricted.

    `Q` is a QFormField or a stack of matrices (..., n, n); `subspace` holds
    orthonormal basis columns (..., n, d) and the restriction is N^T M conj(N).
    """
    M = _grid_last(Q.matrix) if isinstance(Q, QFormField) else np.asarray(Q)
    if subspace is not None:
        N = np.asarray(subspace)
        M = np.einsum("...ja,...jk,...kb->...ab", N, M, N.conj())
    M = 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))
    lam = np.linalg.eigvalsh(M) if M.shape[-1] else np.zeros(M.shape[:-1])
    return (np.sum(lam > tol, axis=-1), np.sum(np.abs(lam) <= tol, axis=-1), np.sum(lam < -tol, axis=-1))


@dataclass
class ConvexityVerdict:
    passed: bool
    q: int
    checked: int
    failing_point: tuple | None = None
    point_pass: np.ndarray | None = None
    details: dict = field(default_factory=dict)


def _xphi(S: FIStructure, phi: np.ndarray) -> np.ndarray:
    return np.array([S.apply_X(j, phi.astype(complex)) for j in range(S.n)])


def check_q_convex(S: FIStructure, phi, q: int, tol: float = 1e-6, eig_tol: float = 1e-9,
                   e=None) -> ConvexityVerdict:
    """On K_phi: n_plus of Q restricted to V cap Ker(d phi) >= dim - q + 1.

    q = n + 1 is accepted and always passes (the count requirement is vacuous).
    """
    n = S.n
    if not 1 <= q <= n + 1:
        raise ValueError(f"q must lie in 1..{n + 1}, got {q}")
    phi = _real(phi)
    masks = critical_sets(S, phi, tol)
    Q = q_form(S, phi, e)
    Mk = Q.at(masks.K)  # (p, n, n)
    r = np.moveaxis(_xphi(S, phi), 0, -1)[masks.K]  # (p, n)
    p = Mk.shape[0]
    ok = np.ones(p, bool)
    crit = np.all(np.abs(r) <= tol, axis=-1)
    npos_full = eig_stats(Mk, tol=eig_tol)[0]
    ok[crit] = npos_full[crit] >= n - q + 1
    if np.any(~crit):
        _, _, vh = np.linalg.svd(r[~crit][:, None, :])
        N = np.swapaxes(vh[:, 1:, :].conj(), -1, -2)  # null space of the row r (orthonormal columns)
        npos = eig_stats(Mk[~crit], N, eig_tol)[0]
        ok[~crit] = npos >= (n - 1) - q + 1
    point_pass = np.ones(S.chart.shape, bool)
    point_pass[masks.K] = ok
    fail = None
    if not ok.all():
        flat = np.flatnonzero(masks.K.ravel())[np.argmin(ok)]
        fail = S.chart.point(int(flat))
    return ConvexityVerdict(bool(ok.all()), q, p, fail, point_pass)


def check_q_positive(S: FIStructure, h: LineBundleMetric, q: int, tol: float = 1e-6, eig_tol: float = 1e-9,
                     e=None) -> ConvexityVerdict:
    n = S.n
    if not 1 <= q <= n:
        raise ValueError(f"q must lie in 1..{n}, got {q}")
    if h.discrepancy() > 1e-9:
        raise ValueError(f"weight discrepancy {h.discrepancy():.3e} violates the cocycle relation")
    masks = critical_sets(S, h.base_weight(), tol)
    npos = eig_stats(q_form(S, h, e).at(masks.K), tol=eig_tol)[0]
    ok = npos >= n - q + 1
    point_pass = np.ones(S.chart.shape, bool)
    point_pass[masks.K] = ok
    fail = None
    if not ok.all():
        fail = S.chart.point(int(np.flatnonzero(masks.K.ravel())[np.argmin(ok)]))
    return ConvexityVerdict(bool(ok.all()), q, int(masks.K.sum()), fail, point_pass)


def compensate_e(S: FIStructure, phi, e, region: np.ndarray, margin: float = 1e-3):
    """Modify e on `region` so that Q' = Q + psi X(phi) I has all eigenvalues > 1.

    Returns (e', psi, X-coefficients).
    """
    if isinstance(e, CommutatorCoefficients):
        e = e.e
    phi = _real(phi)
    region = np.asarray(region, bool)
    psi = np.zeros(S.chart.shape)
    if not region.any():
        return e.copy(), psi, np.zeros((S.n,) + S.chart.shape, dtype=complex)
    basis, rank = real_intersection_basis(S)
    if np.any(rank[region] == 0):
        raise NoRealDirection("V cap Vbar vanishes on part of the region")
    grad = gradient_array(phi.astype(complex), S.chart).real
    vphi = np.einsum("...dk,d...->...k", basis, grad)
    Xvec = np.einsum("...dk,...k->...d", basis, vphi)  # real vector field
    Xphi = np.sum(vphi**2, axis=-1)
    if np.any(Xphi[region] <= 0):
        raise NoRealDirection("region meets the critical set K_phi")
    A = np.moveaxis(S.X, (0, 1), (-1, -2))
    coef = np.einsum("...nd,...d->...n", np.linalg.pinv(A), Xvec.astype(complex))
    lam_min = np.linalg.eigvalsh(_grid_last(q_form(S, phi, e).matrix))[..., 0]
    psi[region] = (1.0 + margin - lam_min[region]) / Xphi[region]
    e_new = e.copy()
    for j in range(S.n):
        e_new[j, j] = e[j, j] + psi * np.moveaxis(coef, -1, 0).conj()
    return e_new, psi, np.moveaxis(coef, -1, 0)


# eigenvalue floor ---------------------------------------------------------

def _quintic(b: float, s0: float) -> np.ndarray:
    """Coefficients (ascending) of p on [0, 1] with p(0)=b, p'(0)=s0, p''(0)=0, p(1)=1, p'(1)=1, p''(1)=0."""
    A = np.array([
        [1, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
        [0, 0, 2, 0, 0, 0],
        [1, 1, 1, 1, 1, 1],
        [0, 1, 2, 3, 4, 5],
        [0, 0, 2, 6, 12, 20],
    ], dtype=float)
    return np.linalg.solve(A, [b, s0, 0, 1, 1, 0])


@dataclass(frozen=True)
class FloorFunction:
    """theta(t) = b - t/delta (t <= 0), quintic blend on [0, 1], t (t >= 1); C^2 at both knots."""

    delta: float

    @property
    def offset(self) -> float:
        return 1.0 + 1.0 / self.delta

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        c = _quintic(self.offset, -1.0 / self.delta)
        mid = np.polynomial.polynomial.polyval(np.clip(t, 0, 1), c)
        return np.where(t <= 0, self.offset - t / self.delta, np.where(t >= 1, t, mid))


@dataclass
class HermitianMetricField:
    matrix: np.ndarray  # (N, N, *grid)

    def __post_init__(self):
        M = _grid_last(self.matrix)
        if np.max(np.abs(M - np.conj(np.swapaxes(M, -1, -2))), initial=0.0) > 1e-12:
            raise ValueError("matrix field is not Hermitian")

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(_grid_last(self.matrix)).min())


def eigenfloor_metric(A: HermitianMetricField, eta, delta: float) -> HermitianMetricField:
    """A' = eta * theta(A / eta) through the pointwise spectral decomposition."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    eta = np.asarray(eta, dtype=float)
    if np.any(eta <= 0):
        raise ValueError("eta must be positive")
    theta = FloorFunction(delta)
    M = _grid_last(A.matrix)
    lam, U = np.linalg.eigh(M)
    et = np.broadcast_to(eta, M.shape[:-2])[..., None]
    f = et * theta(lam / et)
    out = np.einsum("...ik,...k,...jk->...ij", U, f, U.conj())
    out = 0.5 * (out + np.conj(np.swapaxes(out, -1, -2)))
    return HermitianMetricField(np.moveaxis(out, (-2, -1), (0, 1)))


def default_parameters(q: int) -> tuple[float, float]:
    """(epsilon, delta) defaults."""
    return 0.25, 1.0 / (2 * max(q - 1, 1))


# chi construction ---------------------------------------------------------

@dataclass
class ChiFunction:
    t: np.ndarray
    g: np.ndarray  # log chi'
    chi: np.ndarray
    dchi: np.ndarray
    ddchi: np.ndarray
    tables: dict
    checks: dict

    def _slope(self, i):
        return (self.g[i + 1] - self.g[i]) / (self.t[i + 1] - self.t[i])

    def __call__(self, s):
        """Evaluate chi (piecewise-exponential chi', extended linearly below t[0] and exponentially above)."""
        s = np.asarray(s, dtype=float)
        t, g = self.t, self.g
        i = np.clip(np.searchsorted(t, s, side="right") - 1, 0, len(t) - 2)
        k = (g[i + 1] - g[i]) / (t[i + 1] - t[i])
        h = s - t[i]
        base = self.chi[i]
        with np.errstate(over="ignore"):
            inc = np.where(np.abs(k) > 1e-14, np.exp(g[i]) * np.expm1(k * h) / np.where(k == 0, 1, k), np.exp(g[i]) * h)
        below = s < t[0]
        return np.where(below, self.chi[0] + np.exp(g[0]) * (s - t[0]), base + inc)

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        t, g = self.t, self.g
        i = np.clip(np.searchsorted(t, s, side="right") - 1, 0, len(t) - 2)
        k = (g[i + 1] - g[i]) / (t[i + 1] - t[i])
        return np.where(s < t[0], np.exp(g[0]), np.exp(g[i] + k * (s - t[i])))


def _sublevel_sup(phi, vals, where, t_grid, which):
    out = np.full(len(t_grid), -np.inf)
    order = np.argsort(phi)
    ph, vv, ww = phi[order], vals[order], where[order]
    for a, t in enumerate(t_grid):
        sel = (ph < t + 1) & ww
        if sel.any():
            m = np.max(vv[sel])
            if not np.isfinite(m):
                raise UnboundedSup(float(t), which)
            out[a] = m
    return out


def construct_chi(phi, fields: dict, t_grid) -> ChiFunction:
    """Convex increasing chi with chi' >= max(mu, C, lambda) and chi''/chi' >= R on t_grid.

    `fields` holds grid arrays mu, R, Psi, lam, C_eps, xphi2 (= |X_phi(phi)|^2);
    missing ones default to the neutral choice (Psi = 0, C_eps = 0).
    """
    phi = _real(phi).ravel()
    t_grid = np.asarray(t_grid, dtype=float)

    def get(key, default):
        return np.broadcast_to(np.asarray(fields.get(key, default), dtype=float), phi.shape).ravel()

    Psi, Ce = get("Psi", 0.0), get("C_eps", 0.0)
    psi_on = Psi != 0
    with np.errstate(divide="ignore", invalid="ignore"):
        mu_v = np.where(psi_on, (1 - Ce) * Psi / get("mu", 1.0), -np.inf)
        R_v = np.where(psi_on, (1 - get("R", 0.0) / np.where(psi_on, Psi, 1)) / get("xphi2", 1.0), -np.inf)
        lam_v = np.where(Psi != 1, (1 - Ce) * (1 - Psi) / get("lam", 1.0), -np.inf)
    mu_v[psi_on & ~np.isfinite(mu_v)] = np.inf
    R_v[psi_on & ~np.isfinite(R_v)] = np.inf
    lam_v[(Psi != 1) & ~np.isfinite(lam_v)] = np.inf
    everywhere = np.ones_like(psi_on)
    mu_t = _sublevel_sup(phi, mu_v, psi_on, t_grid, "mu")
    R_t = _sublevel_sup(phi, R_v, psi_on, t_grid, "R")
    C_t = _sublevel_sup(phi, 1 - Ce, everywhere, t_grid, "C")
    lam_t = _sublevel_sup(phi, lam_v, Psi != 1, t_grid, "lambda")
    floor = np.maximum.reduce([mu_t, C_t, lam_t, np.full_like(t_grid, -np.inf)])
    need_R = np.maximum(R_t, 0.0)
    # chi' = exp(g), g piecewise linear; slopes dominate R on each cell, values dominate the floor
    logf = np.log(np.maximum(floor, 1e-300))
    g = np.empty_like(t_grid)
    g[0] = max(0.0, logf[0], logf[min(1, len(t_grid) - 1)])
    for i in range(len(t_grid) - 1):
        h = t_grid[i + 1] - t_grid[i]
        target = logf[min(i + 2, len(t_grid) - 1)]
        slope = max(need_R[i + 1], (target - g[i]) / h, 0.0)
        g[i + 1] = g[i] + slope * h
    dchi = np.exp(g)
    slopes = np.diff(g) / np.diff(t_grid)
    kright = np.append(slopes, slopes[-1] if len(slopes) else 0.0)
    ddchi = dchi * kright
    chi = np.empty_like(t_grid)
    chi[0] = t_grid[0]
    for i in range(len(t_grid) - 1):
        k, h = slopes[i], t_grid[i + 1] - t_grid[i]
        chi[i + 1] = chi[i] + (np.exp(g[i]) * np.expm1(k * h) / k if abs(k) > 1e-14 else np.exp(g[i]) * h)
    checks = {
        "chi_prime_floor": bool(np.all(dchi >= floor * (1 - 1e-12))),
        "log_convexity": bool(np.all(kright >= R_t - 1e-12)),
        "convex_increasing": bool(np.all(dchi > 0) and np.all(kright >= 0)),
    }
    tables = {"mu": mu_t, "R": R_t, "C": C_t, "lambda": lam_t}
    return ChiFunction(t_grid, g, chi, dchi, ddchi, tables, checks)


def lowest_sum_eigs(Q: QFormField, q: int) -> np.ndarray:
    """Sum of the q smallest eigenvalues: the pointwise lower bound of the Q-term on (m,q)-forms."""
    lam = np.linalg.eigvalsh(_grid_last(Q.matrix))
    return lam[..., :q].sum(axis=-1)
