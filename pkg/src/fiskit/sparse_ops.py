"""Sparse matrix versions of grid operators, on C-order flattened fields."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .grid import Chart, fourier_diff_matrix


@lru_cache(maxsize=32)
def derivative_matrix(chart: Chart, axis: int) -> sp.csr_matrix:
    mats = []
    for a, c in enumerate(chart.coords):
        if a == axis:
            mats.append(sp.csr_matrix(fourier_diff_matrix(c.resolution, c.period)))
        else:
            mats.append(sp.identity(c.resolution, dtype=complex, format="csr"))
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


def diag(values: np.ndarray) -> sp.dia_matrix:
    return sp.diags(np.ravel(values).astype(complex))


def vector_matrix(chart: Chart, components: np.ndarray) -> sp.csr_matrix:
    """Matrix of f -> sum_nu X^nu d_nu f."""
    out = sp.csr_matrix((chart.size, chart.size), dtype=complex)
    for nu in range(chart.dim):
        c = components[nu]
        if np.any(c != 0):
            out = out + diag(c) @ derivative_matrix(chart, nu)
    return out.tocsr()
