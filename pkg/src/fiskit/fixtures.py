"""Bundled structures on periodic boxes, all with trigonometric-polynomial data."""
from __future__ import annotations

import numpy as np

from .grid import Chart, VectorField
from .structure import FIStructure

TAU = 2 * np.pi


def _vf(chart, *comps):
    return VectorField(chart, comps)


def essentially_real_t2(resolution: int = 16) -> FIStructure:
    """T^2 foliated by the x1-circles: V = span{d1}."""
    ch = Chart.torus(2, resolution)
    return FIStructure(ch, [_vf(ch, 1, 0)], [_vf(ch, 0, 1)], "essentially_real_t2")


def de_rham_t2(resolution: int = 16) -> FIStructure:
    """V = complexified tangent bundle of T^2 (m = 0)."""
    ch = Chart.torus(2, resolution)
    return FIStructure(ch, [_vf(ch, 1, 0), _vf(ch, 0, 1)], [], "de_rham_t2")


def essentially_real_t3(resolution: int = 16) -> FIStructure:
    """T^3 foliated by the (x1, x2)-tori."""
    ch = Chart.torus(3, resolution)
    return FIStructure(ch, [_vf(ch, 1, 0, 0), _vf(ch, 0, 1, 0)], [_vf(ch, 0, 0, 1)], "essentially_real_t3")


def complex_t2(resolution: int = 16) -> FIStructure:
    """V = span{d/dzbar} with z = x1 + i x2; coframe theta = dz, omega = dzbar."""
    ch = Chart.torus(2, resolution)
    return FIStructure(ch, [_vf(ch, 0.5, 0.5j)], [_vf(ch, 0.5, -0.5j)], "complex_t2")


def mizohata_free(resolution: int = 16, axis: int = 0) -> FIStructure:
    """X = d1 + i(2 + sin x_axis) d2 with complement d2.

    For axis 0 the coframe is omega = dx1, theta = dx2 - i a dx1 (closed).
    """
    ch = Chart.torus(2, resolution)
    x = ch.mesh()[axis]
    a = 2 + np.sin(x)
    return FIStructure(ch, [_vf(ch, 1, 1j * a)], [_vf(ch, 0, 1)], f"mizohata_free_{axis}", theta_basic=axis == 0)


def elliptic_normal(resolution: int = 16) -> FIStructure:
    """Coordinates (x1, x2, t), z = x1 + i x2; V = span{d/dzbar, d/dt}."""
    ch = Chart.torus(3, resolution, names=["x1", "x2", "t"])
    return FIStructure(ch, [_vf(ch, 0.5, 0.5j, 0), _vf(ch, 0, 0, 1)], [_vf(ch, 0.5, -0.5j, 0)], "elliptic_normal")


def levi_flat_cr(resolution: int = 16) -> FIStructure:
    """T^2 x S^1 with coordinates (x1, x2, y); V = span{d/dzbar}; theta = (dz, dy)."""
    ch = Chart.torus(3, resolution, names=["x1", "x2", "y"])
    return FIStructure(ch, [_vf(ch, 0.5, 0.5j, 0)], [_vf(ch, 0.5, -0.5j, 0), _vf(ch, 0, 0, 1)], "levi_flat_cr")


def levi_flat_cr_rescaled(resolution: int = 16) -> FIStructure:
    """Same structure with theta' = F theta for a unimodular F(x) that is not basic.

    F = [[1 + s c, s], [c, 1]] with s = sin(x1)/2, c = 0.4 cos(x2 + y); det F = 1 is basic.
    """
    ch = Chart.torus(3, resolution, names=["x1", "x2", "y"])
    x1, x2, y = ch.mesh()
    s, c = 0.5 * np.sin(x1), 0.4 * np.cos(x2 + y)
    G = np.array([[np.ones_like(s), -c], [-s, 1 + s * c]])  # F^{-T}
    P = np.array([[0.5, -0.5j, 0], [0, 0, 1]], dtype=complex)
    Pn = [_vf(ch, *(G[a, 0] * P[0, nu] + G[a, 1] * P[1, nu] for nu in range(3))) for a in range(2)]
    return FIStructure(ch, [_vf(ch, 0.5, 0.5j, 0)], Pn, "levi_flat_cr_rescaled")


def reframe(S: FIStructure, A: np.ndarray, name: str = "") -> FIStructure:
    """New V-frame Y_j = sum_k A[j, k] X_k, complement unchanged."""
    Y = np.einsum("jk...,kn...->jn...", A, S.X)
    V = [VectorField(S.chart, Y[j]) for j in range(S.n)]
    return FIStructure(S.chart, V, S.P, name or S.name + "_reframed", S.theta_basic)


def elliptic_generic(resolution: int = 16) -> FIStructure:
    """Elliptic normal chart with a non-constant V-frame (non-commuting brackets with Vbar)."""
    S = elliptic_normal(resolution)
    x1, x2, t = S.chart.mesh()
    one = np.ones_like(x1)
    s, c = 0.5 * np.sin(x2), 0.3 * np.cos(x1 + t)
    # unit determinant keeps the coframe a trigonometric polynomial
    A = np.array([[one, s], [c, one + s * c]])
    return reframe(S, A, "elliptic_generic")


ACCEPTANCE_FIXTURES = {
    "essentially_real_t2": essentially_real_t2,
    "complex_t2": complex_t2,
    "mizohata_free": mizohata_free,
    "elliptic_normal": elliptic_normal,
    "levi_flat_cr": levi_flat_cr,
}

FIXTURES = {
    **ACCEPTANCE_FIXTURES,
    "de_rham_t2": de_rham_t2,
    "essentially_real_t3": essentially_real_t3,
    "elliptic_generic": elliptic_generic,
    "levi_flat_cr_rescaled": levi_flat_cr_rescaled,
}
