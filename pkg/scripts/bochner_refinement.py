"""Measured Bochner remainder constant on the Mizohata fixture under grid refinement."""
from dataclasses import asdict, dataclass, field

import numpy as np

from _config import emit, parse
from fiskit import fixtures
from fiskit.grid import bump_profile, periodic_distance
from fiskit.l2 import assemble, bochner_check


@dataclass
class Config:
    resolutions: list = field(default_factory=lambda: [16, 24, 32])
    seeds: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    band: int = 2
    radius: float = 2.5
    out: str = ""


def constant(res: int, seed: int, band: int, radius: float) -> dict:
    S = fixtures.mizohata_free(res)
    x1, x2 = S.chart.mesh()
    C = assemble(S, weight=0.3 * np.cos(x1) + 0.2 * np.sin(x2))
    rng = np.random.default_rng(seed)
    k = np.arange(-band, band + 1)
    modes = rng.standard_normal((k.size, k.size)) + 1j * rng.standard_normal((k.size, k.size))
    trig = sum(modes[a, b] * np.exp(1j * (k[a] * x1 + k[b] * x2)) for a in range(k.size) for b in range(k.size))
    g = bump_profile(periodic_distance(S.chart, (np.pi, np.pi)) / radius) * trig
    r = bochner_check(C, 1, g[None])
    return {"lhs": r.lhs, "q_term": r.q_term, "grad_term": r.grad_term, "remainder": r.remainder, "C_hat": r.C_hat}


def main(cfg: Config):
    rows = [{"resolution": res, "seed": s, **constant(res, s, cfg.band, cfg.radius)}
            for s in cfg.seeds for res in cfg.resolutions]
    drift = {}
    for s in cfg.seeds:
        c = [r["C_hat"] for r in rows if r["seed"] == s]
        drift[s] = [abs(a - b) / b for a, b in zip(c, c[1:])]
    emit({"config": asdict(cfg), "rows": rows, "relative_drift": drift}, cfg.out)


if __name__ == "__main__":
    main(parse(Config, doc=__doc__))
