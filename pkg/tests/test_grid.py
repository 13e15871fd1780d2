import numpy as np
import pytest
from hypothesis import given, strategies as st

from fiskit.grid import (
    Chart, ChartMismatch, ScalarField, VectorField, apply_vector, bump, diff_array,
    fourier_diff_matrix, integrate, lie_bracket, partial_derivative, random_trig_field,
)

T2 = Chart.torus(2, 16)
seeds = st.integers(0, 2**32 - 1)


def field(fn, chart=T2):
    return ScalarField.from_function(chart, fn)


def test_derivative_of_sine():
    f = field(lambda x1, x2: np.sin(x1))
    assert np.allclose(partial_derivative(f, 0).values, np.cos(T2.mesh()[0]), atol=1e-13)


def test_derivative_of_constant_vanishes():
    assert partial_derivative(field(lambda x1, x2: 1 + 0 * x1), 1).max_abs() < 1e-13


def test_fourier_mode_beats_finite_differences():
    f = field(lambda x1, x2: np.exp(3j * x2))
    exact = 3j * f.values
    err = np.max(np.abs(partial_derivative(f, 1).values - exact))
    assert err < 1e-12
    # second-order centred differences converge slowly; the spectral result is far below them
    h = 2 * np.pi / 16
    fd = (np.roll(f.values, -1, axis=1) - np.roll(f.values, 1, axis=1)) / (2 * h)
    assert np.max(np.abs(fd - exact)) > 1e3 * err


def test_axis_out_of_range():
    with pytest.raises(IndexError):
        diff_array(np.zeros((16, 16)), T2, 2)


def test_diff_matrix_skew_hermitian_and_kernel():
    D = fourier_diff_matrix(16, 2 * np.pi)
    assert np.allclose(D, -D.conj().T, atol=1e-13)
    s = np.linalg.svd(D, compute_uv=False)
    assert np.sum(s < 1e-10) == 1  # only the constants, Nyquist included


def test_apply_vector_examples():
    x1, x2 = T2.mesh()
    assert np.allclose(apply_vector(VectorField.coordinate(T2, 0), field(lambda a, b: np.sin(a))).values, np.cos(x1))
    assert apply_vector(VectorField(T2, [0, 1j]), field(lambda a, b: 1 + 0 * a)).max_abs() < 1e-13
    X = VectorField(T2, [1, 1j * (2 + np.sin(x1))])
    out = apply_vector(X, field(lambda a, b: np.exp(1j * b))).values
    assert np.allclose(out, -(2 + np.sin(x1)) * np.exp(1j * x2), atol=1e-12)


def test_bracket_examples():
    x1, _ = T2.mesh()
    d1, d2 = VectorField.coordinate(T2, 0), VectorField.coordinate(T2, 1)
    assert np.abs(lie_bracket(d1, d2).components).max() < 1e-13
    br = lie_bracket(d1, VectorField(T2, [0, np.sin(x1)])).components
    assert np.allclose(br[1], np.cos(x1), atol=1e-12) and np.abs(br[0]).max() < 1e-13
    X = VectorField(T2, [1, 1j * (2 + np.sin(x1))])
    br = lie_bracket(X, X.conj()).components
    assert np.allclose(br[1], -2j * np.cos(x1), atol=1e-12) and np.abs(br[0]).max() < 1e-13


def test_chart_mismatch():
    other = Chart.torus(2, 8)
    with pytest.raises(ChartMismatch):
        apply_vector(VectorField.coordinate(T2, 0), ScalarField(other, 1.0))
    with pytest.raises(ChartMismatch):
        lie_bracket(VectorField.coordinate(T2, 0), VectorField.coordinate(other, 0))


def test_integrate_examples():
    one = ScalarField(T2, 1.0)
    assert integrate(one) == pytest.approx((2 * np.pi) ** 2, rel=1e-14)
    assert abs(integrate(field(lambda a, b: np.sin(a)))) < 1e-13
    e = field(lambda a, b: np.exp(1j * a))
    assert integrate(e * e.conj(), ScalarField(T2, 0.0)) == pytest.approx((2 * np.pi) ** 2, rel=1e-14)


def test_bump_examples():
    b = bump(T2, (np.pi, np.pi), 1.5)
    assert b.values[8, 8] == 1.0
    x1, x2 = T2.mesh()
    far = np.hypot(x1 - np.pi, x2 - np.pi) >= 1.5
    assert np.all(b.values[far] == 0)
    mass = integrate(b).real
    assert 0 < mass < np.pi * 1.5**2
    with pytest.raises(ValueError):
        bump(T2, (0, 0), 4.0)


def test_refinement_reproduces_coarse_points():
    coarse = Chart.torus(2, 8)
    for factor in (2, 3, 5):
        fine = coarse.refine(8 * factor)
        for a in range(2):
            assert np.array_equal(fine.axis_points(a)[::factor], coarse.axis_points(a))


@given(seeds)
def test_partials_commute(seed):
    f = random_trig_field(T2, np.random.default_rng(seed), 3)
    a = diff_array(diff_array(f, T2, 0), T2, 1)
    b = diff_array(diff_array(f, T2, 1), T2, 0)
    assert np.max(np.abs(a - b)) < 1e-12 * max(1, np.abs(a).max())


@given(seeds)
def test_integral_of_derivative_vanishes(seed):
    f = ScalarField(T2, random_trig_field(T2, np.random.default_rng(seed), 4))
    for a in range(2):
        assert abs(integrate(partial_derivative(f, a))) < 1e-12


@given(seeds)
def test_bracket_antisymmetric_and_jacobi(seed):
    rng = np.random.default_rng(seed)
    ch = Chart.torus(2, 24)
    X, Y, Z = (VectorField(ch, [random_trig_field(ch, rng, 2) for _ in range(2)]) for _ in range(3))
    assert np.abs((lie_bracket(X, Y) + lie_bracket(Y, X)).components).max() < 1e-10
    jac = lie_bracket(X, lie_bracket(Y, Z)) + lie_bracket(Y, lie_bracket(Z, X)) + lie_bracket(Z, lie_bracket(X, Y))
    assert np.abs(jac.components).max() < 1e-10 * max(1, np.abs(X.components).max() ** 3)
