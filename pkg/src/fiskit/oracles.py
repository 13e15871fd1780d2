"""Closed-form expected values, computed without the library's operators.

Each oracle returns a JSON-ready mapping; the CLI prints them and the tests
freeze them.
"""
from __future__ import annotations

import numpy as np


def t2_dolbeault_mode(k1: int = 1, k2: int = 1) -> complex:
    """Coefficient c with D_0(c e^{i(k.x)}) = e^{i(k.x)} for V = span{d/dzbar} (m = 1, D_0 = -X)."""
    symbol = 0.5 * (1j * k1 + 1j * (1j * k2))  # X = (d1 + i d2)/2 on e^{ik.x}
    if symbol == 0:
        raise ZeroDivisionError("mode (0, 0) has an empty preimage")
    return -1 / symbol


def t2_dolbeault() -> dict:
    c = t2_dolbeault_mode(1, 1)
    return {"f": "exp(i*(x1+x2))", "u_coefficient": [c.real, c.imag],
            "note": "constant f has zero preimage; its obstruction equals its norm"}


def leafwise_t2_defect(resolution: int = 16, twist: complex = 0.0) -> int:
    """Per-leaf count for V = span{d1} on T^2 at q = 0.

    A mode (k1, k2) is in the kernel of d1 - c iff i k1 - c = 0.  With the
    Nyquist convention the k1 symbols are i*(-N/2 .. N/2-1).
    """
    k1 = np.arange(-(resolution // 2), resolution - resolution // 2)
    hits = np.sum(np.abs(1j * k1 - twist) < 1e-12)
    return int(hits * resolution)


def leafwise() -> dict:
    return {"resolution": 16, "defect_untwisted": leafwise_t2_defect(16),
            "defect_twist_0.5": leafwise_t2_defect(16, 0.5), "defect_twist_i": leafwise_t2_defect(16, 1j)}


def mizohata_commutator() -> dict:
    """X = d1 + i a(x1) d2 with a = 2 + sin x1; [X, Xbar] = d X - e Xbar gives d = e = -a'/a."""
    x = np.array([0.0, np.pi / 2, np.pi])
    a, da = 2 + np.sin(x), np.cos(x)
    # [X, Xbar] = -2i a' d2 and X - Xbar = 2i a d2, so [X, Xbar] = -(a'/a)(X - Xbar)
    val = -da / a
    return {"d": "-cos(x1)/(2+sin(x1))", "e": "-cos(x1)/(2+sin(x1))", "x1": x.tolist(), "values": val.tolist()}


def levi_flat_leafwise(resolution: int = 8) -> dict:
    """Leaves T^2 x {y}: leafwise holomorphic truncated modes are the constants, one per y level."""
    return {"resolution": resolution, "defect_q0": resolution}


def normal_chart_q() -> dict:
    """phi = 2(2 - cos x1 - cos x2) + 2(1 - cos t) at the origin, frame {d/dzbar, d/dt}: Q = diag(1, 2)."""
    return {"eigenvalues": [1.0, 2.0]}


def poincare() -> dict:
    return {"f": "dz1^dz2", "primitive": "(z1 dz2 - z2 dz1)/2"}


ORACLES = {
    "t2_dolbeault": t2_dolbeault,
    "leafwise": leafwise,
    "mizohata_commutator": mizohata_commutator,
    "levi_flat_leafwise": levi_flat_leafwise,
    "normal_chart_q": normal_chart_q,
    "poincare": poincare,
}
ORACLES["list"] = lambda: {"oracles": sorted(k for k in ORACLES if k != "list")}
