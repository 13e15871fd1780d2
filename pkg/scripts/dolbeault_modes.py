"""Solve the T^2 Dolbeault equation mode by mode and compare with the Fourier symbol."""
from dataclasses import asdict, dataclass

import numpy as np

from _config import emit, parse
from fiskit import fixtures, oracles
from fiskit.l2 import assemble, solve


@dataclass
class Config:
    resolution: int = 16
    kmax: int = 4
    method: str = "cg"
    out: str = ""


def main(cfg: Config):
    S = fixtures.complex_t2(cfg.resolution)
    C = assemble(S)
    x1, x2 = S.chart.mesh()
    rows = []
    for k1 in range(-cfg.kmax, cfg.kmax + 1):
        for k2 in range(-cfg.kmax, cfg.kmax + 1):
            f = np.exp(1j * (k1 * x1 + k2 * x2))[None]
            u, rep = solve(C, 1, f, method=cfg.method)
            row = {"k": [k1, k2], "obstruction": rep.obstruction, "iterations": rep.iterations}
            if k1 or k2:
                c = oracles.t2_dolbeault_mode(k1, k2)
                row["error"] = float(np.abs(u[0] - c * f[0]).max())
            rows.append(row)
    worst = max(r.get("error", 0.0) for r in rows)
    emit({"config": asdict(cfg), "max_error": worst, "rows": rows}, cfg.out)


if __name__ == "__main__":
    main(parse(Config, doc=__doc__))
