from math import comb

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from fiskit.forms import (
    BasisMismatch, Form, FrameDegenerate, change_basis, d_scalar, dual_coframe,
    exterior_derivative, interior_product, pointwise_rank, to_coordinates, wedge,
)
from fiskit.grid import Chart, ScalarField, VectorField, random_trig_field

T2 = Chart.torus(2, 16)
T3 = Chart.torus(3, 8)
seeds = st.integers(0, 2**32 - 1)


def rform(chart, k, rng, degree=2):
    return Form(chart, k, [random_trig_field(chart, rng, degree) for _ in range(comb(chart.dim, k))])


def dx(chart, nu):
    return Form.from_terms(chart, 1, {(nu,): 1.0})


def mizohata(chart):
    x1 = chart.mesh()[0]
    X = VectorField(chart, [1, 1j * (2 + np.sin(x1))])
    return X, X.conj()


def test_wedge_examples():
    w = wedge(dx(T3, 0), dx(T3, 1))
    assert w.degree == 2 and np.all(w.coefficient((0, 1)).values == 1)
    assert w.coefficient((0, 2)).max_abs() == 0 and w.coefficient((1, 2)).max_abs() == 0
    rng = np.random.default_rng(0)
    a = rform(T3, 1, rng)
    assert wedge(a, a).max_abs() < 1e-13
    x1 = T3.mesh()[0]
    b = wedge(dx(T3, 0).scale(np.sin(x1)), dx(T3, 1) + dx(T3, 2))
    assert np.allclose(b.coefficient((0, 1)).values, np.sin(x1))
    assert np.allclose(b.coefficient((0, 2)).values, np.sin(x1))
    assert b.coefficient((1, 2)).max_abs() == 0


def test_wedge_errors():
    with pytest.raises(ValueError):
        wedge(wedge(dx(T2, 0), dx(T2, 1)), dx(T2, 0))
    cf = dual_coframe([VectorField.coordinate(T2, a) for a in range(2)])
    with pytest.raises(BasisMismatch):
        wedge(dx(T2, 0), change_basis(dx(T2, 1), cf))


def test_exterior_derivative_examples():
    x1 = T3.mesh()[0]
    df = exterior_derivative(Form.from_terms(T3, 1, {(1,): np.sin(x1)}))
    assert np.allclose(df.coefficient((0, 1)).values, np.cos(x1), atol=1e-12)
    assert df.coefficient((0, 2)).max_abs() < 1e-13 and df.coefficient((1, 2)).max_abs() < 1e-13
    const = Form.from_terms(T3, 2, {(0, 1): 2.0, (1, 2): -1j})
    assert exterior_derivative(const).max_abs() < 1e-13
    with pytest.raises(ValueError):
        exterior_derivative(Form.zero(T2, 2))


def test_interior_product_examples():
    d1, d3 = VectorField.coordinate(T3, 0), VectorField.coordinate(T3, 2)
    w = wedge(dx(T3, 0), dx(T3, 1))
    out = interior_product(d1, w)
    assert np.allclose(out.coeffs, dx(T3, 1).coeffs)
    assert interior_product(d3, w).max_abs() == 0
    x1, x2, _ = T3.mesh()
    f, g = np.sin(x1), np.cos(x2) + 1j
    fg = interior_product(VectorField(T3, [f, 0, 0]), Form.from_terms(T3, 1, {(0,): g}))
    assert fg.degree == 0 and np.allclose(fg.coeffs[0], f * g)
    with pytest.raises(ValueError):
        interior_product(d1, Form.scalar(ScalarField(T3, 1.0)))


def test_dual_coframe_examples():
    cf = dual_coframe([VectorField.coordinate(T2, a) for a in range(2)])
    for a in range(2):
        assert np.allclose(cf.covector(a).coeffs, dx(T2, a).coeffs)
    cf = dual_coframe([VectorField(T2, [1, 1j]), VectorField(T2, [1, -1j])])
    assert np.allclose(cf.covectors[0], np.array([0.5, -0.5j])[:, None, None])
    assert np.allclose(cf.covectors[1], np.array([0.5, 0.5j])[:, None, None])
    X, Xb = mizohata(T2)
    cf = dual_coframe([X, Xb])
    assert cf.pairing_error() < 1e-10
    # independent oracle: invert the 2x2 component matrix at a few points by hand
    a = 2 + np.sin(T2.mesh()[0])
    det = -2j * a
    assert np.allclose(cf.covectors[0, 0], -1j * a / det)
    assert np.allclose(cf.covectors[0, 1], -1 / det)


def test_dual_coframe_degenerate():
    x1 = T2.mesh()[0]
    with pytest.raises(FrameDegenerate) as exc:
        dual_coframe([VectorField.coordinate(T2, 0), VectorField(T2, [0, np.sin(x1)])])
    assert exc.value.point[0] in (0.0, np.pi)


def test_pointwise_rank_examples():
    d1, d2 = VectorField.coordinate(T2, 0), VectorField.coordinate(T2, 1)
    assert pointwise_rank([d1, d2]) == (2, 2)
    assert pointwise_rank([d1, d1.scale(np.sin(T2.mesh()[0]))]) == (1, 1)
    X, Xb = mizohata(T2)
    assert pointwise_rank([X, Xb]) == (2, 2)


def test_change_basis_examples():
    cf = dual_coframe([VectorField.coordinate(T2, a) for a in range(2)])
    c = change_basis(dx(T2, 0), cf)
    assert c.basis is cf and np.allclose(c.coefficient((0,)).values, 1)
    X, Xb = mizohata(T2)
    cf = dual_coframe([X, Xb])
    a = rform(T2, 2, np.random.default_rng(3))
    assert np.max(np.abs(to_coordinates(change_basis(a, cf)).coeffs - a.coeffs)) < 1e-10
    # a covector of the coframe has a single unit coefficient in its own basis
    th = change_basis(cf.covector(1), cf)
    assert np.allclose(th.coefficient((1,)).values, 1) and th.coefficient((0,)).max_abs() < 1e-12


@given(seeds, st.integers(0, 2), st.integers(0, 1))
def test_leibniz(seed, ka, kb):
    assume(ka + kb < 3)
    rng = np.random.default_rng(seed)
    # degree-1 factors keep products below the Nyquist mode at resolution 8
    a, b = rform(T3, ka, rng, 1), rform(T3, kb, rng, 1)
    lhs = exterior_derivative(wedge(a, b))
    rhs = wedge(exterior_derivative(a), b) + wedge(a, exterior_derivative(b)).scale((-1) ** ka)
    assert (lhs - rhs).max_abs() < 1e-10


@given(seeds)
def test_d_squared(seed):
    rng = np.random.default_rng(seed)
    f = ScalarField(T3, random_trig_field(T3, rng, 3))
    assert exterior_derivative(d_scalar(f)).max_abs() < 1e-10
    assert exterior_derivative(exterior_derivative(rform(T3, 1, rng))).max_abs() < 1e-10


@given(seeds, st.integers(1, 2), st.integers(0, 1))
def test_interior_antiderivation(seed, ka, kb):
    rng = np.random.default_rng(seed)
    X = VectorField(T3, [random_trig_field(T3, rng, 1) for _ in range(3)])
    a, b = rform(T3, ka, rng, 1), rform(T3, kb, rng, 1)
    lhs = interior_product(X, wedge(a, b))
    rhs = wedge(interior_product(X, a), b)
    if kb:
        rhs = rhs + wedge(a, interior_product(X, b)).scale((-1) ** ka)
    assert (lhs - rhs).max_abs() < 1e-10 * max(1, lhs.max_abs())


@given(seeds, st.integers(0, 3))
def test_change_basis_round_trip(seed, k):
    rng = np.random.default_rng(seed)
    vecs = [VectorField(T3, [np.eye(3)[b, n] + 0.2 * random_trig_field(T3, rng, 1) / 9 for n in range(3)])
            for b in range(3)]
    cf = dual_coframe(vecs)
    assert cf.pairing_error() < 1e-10
    a = rform(T3, k, rng)
    assert np.max(np.abs(to_coordinates(change_basis(a, cf)).coeffs - a.coeffs)) < 1e-10 * max(1, a.max_abs())
