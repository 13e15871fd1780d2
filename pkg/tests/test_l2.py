from math import comb

import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp

from fiskit import fixtures, oracles
from fiskit.forms import Form
from fiskit.grid import ScalarField, diff_array, periodic_distance, random_trig_field
from fiskit.l2 import (
    ClippedSupport, IllConditioned, NotClosed, UnclassifiedStructure, apriori_check, assemble,
    assemble_quotient, bochner_check, chi_weight, classify, export_matrix_market, leafwise_cohomology,
    random_test_form, solve,
)
from fiskit.structure import FIStructure, phi_iso
from fiskit.grid import Chart, VectorField

TAU = 2 * np.pi


def twist_dx1(S, c):
    return Form.from_terms(S.chart, 1, {(0,): c})


# ---- assembly

CONSTANT_FRAMES = ["elliptic_normal", "essentially_real_t3", "de_rham_t2"]


@pytest.mark.parametrize("name", CONSTANT_FRAMES)
def test_composition_vanishes(name):
    S = fixtures.FIXTURES[name](8)
    x = S.chart.mesh()
    C = assemble(S, weight=0.3 * np.cos(x[0]))
    for q in range(S.n - 1):
        assert C.composition_norm(q) < 1e-9


def test_composition_on_band_limited_subspace():
    # variable frame coefficients alias the top grid modes, so D^2 = 0 holds on band-limited data only
    S = fixtures.elliptic_generic(8)
    C = assemble(S)
    rng = np.random.default_rng(0)
    B = np.array([random_trig_field(S.chart, rng, 1).ravel() for _ in range(40)]).T
    out = C.D(1) @ (C.D(0) @ B)
    assert np.abs(out).max() < 1e-9 * np.abs(C.D(0) @ B).max()


def test_rank_one_complex_has_two_levels():
    C = assemble(fixtures.complex_t2(8))
    assert C.dim(0) == C.dim(1) == 64 and C.dim(2) == 0
    assert C.D(1).shape == (0, 64)


def test_dolbeault_kernel_is_constants():
    C = assemble(fixtures.complex_t2(8))
    s = np.linalg.svd(C.D(0).toarray(), compute_uv=False)
    assert np.sum(s < 1e-8 * s[0]) == 1


def test_weights_positive_and_clipped():
    S = fixtures.complex_t2(8)
    x1 = S.chart.mesh()[0]
    C = assemble(S, weight=60 * np.cos(x1))
    assert np.all(C.w > 0) and C.clipped.any()
    g = np.ones((1,) + S.chart.shape)
    with pytest.raises(ClippedSupport):
        C.check_support(g)
    C.check_support(g * (np.abs(np.cos(x1)) < 0.5))


# ---- adjoints

@pytest.mark.parametrize("name", ["mizohata_free", "elliptic_generic", "levi_flat_cr"])
def test_weighted_adjoint_identity(name):
    S = fixtures.FIXTURES[name](8)
    x = S.chart.mesh()
    C = assemble(S, weight=0.5 * np.sin(x[0]) + 0.2 * np.cos(x[1]))
    rng = np.random.default_rng(0)
    for q in range(S.n):
        A = C.adjoint(q)
        for _ in range(10):
            u = rng.standard_normal(C.dim(q)) + 1j * rng.standard_normal(C.dim(q))
            v = rng.standard_normal(C.dim(q + 1)) + 1j * rng.standard_normal(C.dim(q + 1))
            lhs, rhs = C.inner(q + 1, C.D(q) @ u, v), C.inner(q, u, A @ v)
            assert abs(lhs - rhs) < 1e-10 * max(1, abs(lhs))


def test_double_adjoint():
    S = fixtures.elliptic_generic(8)
    C = assemble(S, weight=0.4 * np.cos(S.chart.mesh()[2]))
    # the adjoint of the adjoint, taken with the weights swapped, is the original matrix
    A = C.adjoint(0)
    AA = sp.diags(1 / C.weights(1)) @ A.conj().T @ sp.diags(C.weights(0))
    assert abs(AA - C.D(0)).max() < 1e-12 * abs(C.D(0)).max()


def test_flat_adjoint_of_derivative_is_its_negative():
    S = fixtures.essentially_real_t2(16)
    C = assemble(S)
    assert abs(C.adjoint(0) + C.D(0)).max() < 1e-12


def test_scalar_adjoint_formula():
    # X = d1 + i a(x1) d2 is divergence free, so X* = -Xbar + Xbar(phi) in L^2(e^{-phi})
    S = fixtures.mizohata_free(24)
    x1, x2 = S.chart.mesh()
    phi = 0.3 * np.cos(x1) + 0.2 * np.sin(x2)
    C = assemble(S, weight=phi)
    v = random_trig_field(S.chart, np.random.default_rng(1), 2)
    got = (C.adjoint(0) @ v.ravel()).reshape(S.chart.shape)
    Xb = lambda f: S.apply_Xbar(0, f)
    expect = -(-Xb(v) + Xb(phi.astype(complex)) * v)  # D_0 = -X for m = 1
    assert np.abs(got - expect).max() < 1e-9


# ---- Bochner

@pytest.mark.parametrize("name", ["complex_t2", "elliptic_normal", "levi_flat_cr"])
def test_bochner_flat_remainder_vanishes(name):
    S = fixtures.FIXTURES[name](8)
    C = assemble(S)
    g = random_test_form(S.chart, np.random.default_rng(2), comb(S.n, 1), [np.pi] * S.chart.dim, 2.5, 1)
    rep = bochner_check(C, 1, g)
    assert abs(rep.remainder) < 1e-9 * rep.lhs


def _mizohata_bochner(res, seed=3):
    S = fixtures.mizohata_free(res)
    x1, x2 = S.chart.mesh()
    C = assemble(S, weight=0.3 * np.cos(x1) + 0.2 * np.sin(x2))
    rng = np.random.default_rng(seed)
    cut = periodic_distance(S.chart, (np.pi, np.pi)) / 2.5
    from fiskit.grid import bump_profile
    # the same band-limited trig polynomial sampled on both grids
    modes = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    k = np.arange(-2, 3)
    trig = sum(modes[a, b] * np.exp(1j * (k[a] * x1 + k[b] * x2)) for a in range(5) for b in range(5))
    return C, (bump_profile(cut) * trig)[None]


def test_bochner_mizohata_constant_stable():
    C16, g16 = _mizohata_bochner(16)
    C24, g24 = _mizohata_bochner(24)
    r16, r24 = bochner_check(C16, 1, g16), bochner_check(C24, 1, g24)
    assert r16.C_hat > 0
    assert abs(r16.C_hat - r24.C_hat) <= 0.2 * r24.C_hat


def test_bochner_homogeneous():
    C, g = _mizohata_bochner(16)
    a, b = bochner_check(C, 1, g), bochner_check(C, 1, 2 * g)
    for k in ("lhs", "q_term", "grad_term"):
        assert getattr(b, k) == pytest.approx(4 * getattr(a, k), rel=1e-12)
    assert b.C_hat == pytest.approx(a.C_hat, rel=1e-10)


# ---- a-priori estimate

def log_fixture(res=16):
    S = fixtures.complex_t2(res)
    x1, x2 = S.chart.mesh()
    phi = -np.log(8.5 - 2 * (2 + np.cos(x1) + np.cos(x2)))
    region = periodic_distance(S.chart, (np.pi, np.pi)) <= 2.2
    w, chi, lam = chi_weight(S, phi, 1, region, 64)
    return S, assemble(S, weight=w), chi


def test_apriori_log_fixture():
    S, C, chi = log_fixture()
    assert all(chi.checks.values())
    rng = np.random.default_rng(4)
    samples = [random_test_form(S.chart, rng, 1, (np.pi, np.pi), 1.6, 3) for _ in range(40)]
    rep = apriori_check(C, 1, samples)
    assert rep.pass_rate == 1.0 and rep.worst_slack >= -1e-8


def test_apriori_flat_control_fails():
    S = fixtures.complex_t2(16)
    C = assemble(S)
    rep = apriori_check(C, 1, [np.ones((1,) + S.chart.shape)])
    # the constant form is harmonic: ||T* g|| = 0 < ||g||
    assert rep.pass_rate == 0.0 and rep.worst_slack == pytest.approx(-1.0)


def test_apriori_top_degree_has_no_S_term():
    S = fixtures.complex_t2(8)
    C = assemble(S)
    g = random_test_form(S.chart, np.random.default_rng(5), 1, (np.pi, np.pi), 2.0, 2)
    rep = apriori_check(C, 1, [g])
    expect = C.norm(0, C.adjoint(0) @ g.ravel()) ** 2 / C.norm(1, g) ** 2 - 1
    assert rep.slacks[0] == pytest.approx(expect, rel=1e-12)


def test_apriori_implies_solvable():
    S, C, _ = log_fixture()
    g = random_test_form(S.chart, np.random.default_rng(6), 1, (np.pi, np.pi), 1.6, 3)
    _, rep = solve(C, 1, g, method="direct")
    assert rep.obstruction < 1e-6 * rep.f_norm


# ---- solving

def test_t2_dolbeault_mode_oracle():
    S = fixtures.complex_t2(16)
    C = assemble(S)
    x1, x2 = S.chart.mesh()
    f = np.exp(1j * (x1 + x2))[None]
    u, rep = solve(C, 1, f)
    c = oracles.t2_dolbeault_mode(1, 1)
    assert c == pytest.approx(1 + 1j)
    assert np.abs(u[0] - c * f[0]).max() < 1e-9
    assert rep.residual < 1e-9 and rep.obstruction < 1e-9


def test_zero_rhs_gives_zero():
    C = assemble(fixtures.complex_t2(8))
    u, rep = solve(C, 1, np.zeros((1, 8, 8)))
    assert not u.any() and rep.iterations == 0


def test_constant_rhs_is_pure_obstruction():
    C = assemble(fixtures.complex_t2(16))
    f = np.full((1, 16, 16), 2 - 1j)
    u, rep = solve(C, 1, f)
    assert rep.obstruction == pytest.approx(abs(2 - 1j) * TAU, abs=1e-9)
    assert rep.f_norm == pytest.approx(rep.obstruction, abs=1e-9)
    assert np.abs(u).max() < 1e-12


def test_solution_is_minimum_norm():
    S = fixtures.elliptic_normal(8)
    C = assemble(S, weight=0.3 * np.cos(S.chart.mesh()[0]))
    u0 = random_trig_field(S.chart, np.random.default_rng(7), 2)[None]
    f = (C.D(0) @ u0.ravel()).reshape((2,) + S.chart.shape)
    u, rep = solve(C, 1, f)
    assert C.norm(1, C.D(0) @ u.ravel() - f.ravel()) < 1e-8 * C.norm(1, f)
    # the only kernel element in degree 0 is the constant
    one = np.ones(C.dim(0))
    assert abs(C.inner(0, u, one)) < 1e-8 * C.norm(0, u) * C.norm(0, one)


def test_not_closed():
    S = fixtures.elliptic_normal(8)
    f = random_trig_field(S.chart, np.random.default_rng(8), 2)
    with pytest.raises(NotClosed) as exc:
        solve(assemble(S), 1, np.array([f, 0 * f]))
    assert exc.value.residual > 1e-8


def test_iteration_cap_raises():
    S = fixtures.elliptic_normal(8)
    C = assemble(S)
    f = (C.D(0) @ random_trig_field(S.chart, np.random.default_rng(9), 3).ravel())
    with pytest.raises(IllConditioned):
        solve(C, 1, f, maxiter=2)


def test_direct_and_cg_agree():
    S = fixtures.mizohata_free(16)
    x1, x2 = S.chart.mesh()
    C = assemble(S, weight=0.3 * np.cos(x1))
    f = random_trig_field(S.chart, np.random.default_rng(10), 2)[None]
    u1, r1 = solve(C, 1, f)
    u2, r2 = solve(C, 1, f, method="direct")
    assert np.abs(u1 - u2).max() < 1e-8 * np.abs(u2).max()
    assert r1.obstruction == pytest.approx(r2.obstruction, rel=1e-8, abs=1e-10)


def test_preconditioned_solve_still_solves():
    S = fixtures.mizohata_free(16)
    C = assemble(S, weight=0.3 * np.cos(S.chart.mesh()[0]))
    f = (C.D(0) @ random_trig_field(S.chart, np.random.default_rng(11), 2).ravel())
    u, rep = solve(C, 1, f, precondition=True)
    assert C.norm(1, C.D(0) @ u.ravel() - f) < 1e-8 * C.norm(1, f)


def test_quotient_solve_through_phi():
    S = fixtures.elliptic_normal(8)
    x1, x2, t = S.chart.mesh()
    tw = twist_dx1(S, 0.4)
    M, Q = assemble(S, twist=tw), assemble_quotient(S, twist=tw)
    f = (M.D(0) @ random_trig_field(S.chart, np.random.default_rng(12), 2).ravel()).reshape((2,) + S.chart.shape)
    u, _ = solve(M, 1, f)
    v, _ = solve(Q, 1, phi_iso(S, 1, f))
    assert np.abs(phi_iso(S, 0, u) - v).max() < 1e-8


# ---- leafwise cohomology

def test_leafwise_foliation_counts():
    S = fixtures.essentially_real_t2(16)
    rep = leafwise_cohomology(S)
    assert rep.kind == "essentially_real" and rep.defect == oracles.leafwise_t2_defect(16) == 16
    for c in (0.5, 0.3 + 0.2j):
        assert leafwise_cohomology(S, twist_dx1(S, c)).defect == oracles.leafwise_t2_defect(16, c) == 0
    # c in iZ: the twisted constants e^{-i x1} close up
    assert leafwise_cohomology(S, twist_dx1(S, 1j)).defect == oracles.leafwise_t2_defect(16, 1j) == 16


def test_leafwise_levi_flat_counts():
    S = fixtures.levi_flat_cr(8)
    rep = leafwise_cohomology(S, q=0)
    assert rep.kind == "levi_flat_cr"
    assert rep.defect == oracles.levi_flat_leafwise(8)["defect_q0"]
    top = leafwise_cohomology(S, q=1)
    assert top.dim_im == top.dim - 8 and top.defect == 8  # one cokernel constant per y level


def test_leafwise_unclassified():
    ch = Chart.torus(2, 8)
    S = FIStructure(ch, [VectorField(ch, [1, 1j * np.sin(ch.mesh()[1])])], [VectorField(ch, [0, 1])])
    with pytest.raises(UnclassifiedStructure):
        classify(S)


# ---- export

def test_matrix_market_round_trip(tmp_path):
    S = fixtures.complex_t2(8)
    C = assemble(S, weight=0.2 * np.cos(S.chart.mesh()[0]))
    paths = export_matrix_market(C, tmp_path)
    assert sorted(p.name for p in paths) == ["D0.mtx", "W0.mtx", "W1.mtx"]
    D = scipy.io.mmread(tmp_path / "D0.mtx")
    assert abs(sp.csr_matrix(D) - C.D(0)).max() < 1e-14
    assert np.allclose(scipy.io.mmread(tmp_path / "W1.mtx").ravel(), C.weights(1), rtol=1e-15)
