"""Periodic charts, grid-sampled complex fields and spectral differentiation."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class ChartMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Coord:
    name: str
    period: float
    resolution: int


@dataclass(frozen=True)
class Chart:
    coords: tuple[Coord, ...]

    def __post_init__(self):
        if not self.coords:
            raise ValueError("chart needs at least one coordinate")
        names = [c.name for c in self.coords]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate coordinate names {names}")
        for c in self.coords:
            if c.resolution < 4 or c.resolution % 2:
                raise ValueError(f"resolution of {c.name} must be even and >= 4, got {c.resolution}")
            if not c.period > 0:
                raise ValueError(f"period of {c.name} must be positive")

    @classmethod
    def torus(cls, dim: int, resolution: int = 16, period: float = 2 * np.pi, names=None) -> "Chart":
        names = names or [f"x{k + 1}" for k in range(dim)]
        res = resolution if np.ndim(resolution) else [resolution] * dim
        return cls(tuple(Coord(nm, float(period), int(r)) for nm, r in zip(names, res)))

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(c.resolution for c in self.coords)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.coords)

    @property
    def cell_volume(self) -> float:
        return float(np.prod([c.period / c.resolution for c in self.coords]))

    def axis_points(self, axis: int) -> np.ndarray:
        c = self.coords[axis]
        # k/N first: integer refinements then reproduce coarse points exactly
        return c.period * (np.arange(c.resolution) / c.resolution)

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*[self.axis_points(a) for a in range(self.dim)], indexing="ij")

    def refine(self, resolution: int) -> "Chart":
        return Chart(tuple(Coord(c.name, c.period, resolution) for c in self.coords))

    def point(self, flat_index: int) -> tuple[float, ...]:
        idx = np.unravel_index(flat_index, self.shape)
        return tuple(float(self.axis_points(a)[i]) for a, i in enumerate(idx))


@lru_cache(maxsize=64)
def fourier_diff_matrix(n: int, period: float) -> np.ndarray:
    """Dense first-derivative matrix on n periodic samples.

    The Nyquist mode gets the symbol i*(-n/2) rather than 0, so the matrix is
    skew-Hermitian and injective off the zero mode (fields are complex anyway).
    """
    k = np.fft.fftfreq(n, d=1.0 / n) * (2 * np.pi / period)
    sym = 1j * k
    m = np.fft.ifft(sym[:, None] * np.fft.fft(np.eye(n), axis=0), axis=0)
    m.setflags(write=False)
    return m


def diff_array(values: np.ndarray, chart: Chart, axis: int, lead: int = 0) -> np.ndarray:
    """Differentiate a raw array whose trailing dims are the chart grid."""
    if not 0 <= axis < chart.dim:
        raise IndexError(f"axis {axis} out of range for dimension {chart.dim}")
    c = chart.coords[axis]
    D = fourier_diff_matrix(c.resolution, c.period)
    ax = lead + axis
    moved = np.moveaxis(values, ax, -1)
    return np.moveaxis(moved @ D.T, -1, ax)


def _as_values(chart: Chart, f) -> np.ndarray:
    if isinstance(f, ScalarField):
        if f.chart != chart:
            raise ChartMismatch("fields live on different charts")
        return f.values
    return np.broadcast_to(np.asarray(f, dtype=complex), chart.shape)


class ScalarField:
    __slots__ = ("chart", "values")

    def __init__(self, chart: Chart, values):
        v = np.array(np.broadcast_to(np.asarray(values, dtype=complex), chart.shape))
        if not np.all(np.isfinite(v)):
            raise ValueError("field has non-finite samples")
        v.setflags(write=False)
        self.chart = chart
        self.values = v

    @classmethod
    def from_function(cls, chart: Chart, fn) -> "ScalarField":
        return cls(chart, fn(*chart.mesh()))

    def _bin(self, other, op):
        return ScalarField(self.chart, op(self.values, _as_values(self.chart, other)))

    def __add__(self, o):
        return self._bin(o, np.add)

    __radd__ = __add__

    def __sub__(self, o):
        return self._bin(o, np.subtract)

    def __rsub__(self, o):
        return self._bin(o, lambda a, b: b - a)

    def __mul__(self, o):
        return self._bin(o, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return self._bin(o, np.divide)

    def __neg__(self):
        return ScalarField(self.chart, -self.values)

    def conj(self) -> "ScalarField":
        return ScalarField(self.chart, self.values.conj())

    def is_real(self, tol: float = 1e-12) -> bool:
        return float(np.max(np.abs(self.values.imag), initial=0.0)) < tol

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __repr__(self):
        return f"ScalarField(shape={self.values.shape}, max|f|={self.max_abs():.3g})"


class VectorField:
    """Components are the coefficients of d/dx_nu, stacked on the first axis."""

    __slots__ = ("chart", "components")

    def __init__(self, chart: Chart, components):
        comps = [_as_values(chart, c) for c in components]
        if len(comps) != chart.dim:
            raise ValueError(f"need {chart.dim} components, got {len(comps)}")
        arr = np.array(comps, dtype=complex)
        arr.setflags(write=False)
        self.chart = chart
        self.components = arr

    @classmethod
    def coordinate(cls, chart: Chart, axis: int) -> "VectorField":
        comps = np.zeros((chart.dim,) + chart.shape, dtype=complex)
        comps[axis] = 1.0
        return cls(chart, comps)

    def component(self, axis: int) -> ScalarField:
        return ScalarField(self.chart, self.components[axis])

    def conj(self) -> "VectorField":
        return VectorField(self.chart, self.components.conj())

    def scale(self, f) -> "VectorField":
        return VectorField(self.chart, self.components * _as_values(self.chart, f))

    def __add__(self, o: "VectorField"):
        _check(self.chart, o.chart)
        return VectorField(self.chart, self.components + o.components)

    def __sub__(self, o: "VectorField"):
        _check(self.chart, o.chart)
        return VectorField(self.chart, self.components - o.components)

    def __neg__(self):
        return VectorField(self.chart, -self.components)


def _check(a: Chart, b: Chart):
    if a != b:
        raise ChartMismatch("objects live on different charts")


def partial_derivative(f: ScalarField, axis: int) -> ScalarField:
    return ScalarField(f.chart, diff_array(f.values, f.chart, axis))


def gradient_array(values: np.ndarray, chart: Chart, lead: int = 0) -> np.ndarray:
    """Stack of partial derivatives; new axis inserted at position `lead`."""
    return np.stack([diff_array(values, chart, a, lead) for a in range(chart.dim)], axis=lead)


def apply_vector_array(components: np.ndarray, values: np.ndarray, chart: Chart) -> np.ndarray:
    return np.einsum("n...,n...->...", components, gradient_array(values, chart))


def apply_vector(X: VectorField, f: ScalarField) -> ScalarField:
    _check(X.chart, f.chart)
    return ScalarField(f.chart, apply_vector_array(X.components, f.values, f.chart))


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    _check(X.chart, Y.chart)
    ch = X.chart
    comps = [
        apply_vector_array(X.components, Y.components[nu], ch)
        - apply_vector_array(Y.components, X.components[nu], ch)
        for nu in range(ch.dim)
    ]
    return VectorField(ch, comps)


def integrate(f: ScalarField, weight: ScalarField | None = None) -> complex:
    vals = f.values
    if weight is not None:
        _check(f.chart, weight.chart)
        if not weight.is_real():
            raise ValueError("weight must be real-valued")
        vals = vals * np.exp(-weight.values.real)
    return complex(np.sum(vals) * f.chart.cell_volume)


def periodic_distance(chart: Chart, center) -> np.ndarray:
    sq = np.zeros(chart.shape)
    for a, x in enumerate(chart.mesh()):
        L = chart.coords[a].period
        dx = np.mod(x - center[a] + L / 2, L) - L / 2
        sq = sq + dx**2
    return np.sqrt(sq)


def bump_profile(r: np.ndarray) -> np.ndarray:
    out = np.zeros_like(r, dtype=float)
    inside = r < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


def bump(chart: Chart, center, radius: float) -> ScalarField:
    if not 0 < radius < min(c.period for c in chart.coords) / 2:
        raise ValueError("bump radius must be positive and below half the smallest period")
    return ScalarField(chart, bump_profile(periodic_distance(chart, center) / radius))


def random_trig_field(chart: Chart, rng: np.random.Generator, degree: int = 2) -> np.ndarray:
    """Random complex trigonometric polynomial with modes |k_a| <= degree."""
    modes = np.zeros(chart.shape, dtype=complex)
    sl = []
    for a in range(chart.dim):
        ks = np.arange(-degree, degree + 1) % chart.shape[a]
        sl.append(ks)
    idx = np.ix_(*sl)
    n = (2 * degree + 1) ** chart.dim
    modes[idx] = (rng.standard_normal(n) + 1j * rng.standard_normal(n)).reshape([2 * degree + 1] * chart.dim)
    return np.fft.ifftn(modes) * chart.size / n
