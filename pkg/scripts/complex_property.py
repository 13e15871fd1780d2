"""Size of d_{V,theta} applied twice on random band-limited forms, per fixture and resolution."""
import time
from dataclasses import asdict, dataclass, field
from math import comb

import numpy as np

from _config import emit, parse
from fiskit import fixtures
from fiskit.forms import Form, d_scalar
from fiskit.grid import ScalarField, random_trig_field
from fiskit.structure import MNTOperator


@dataclass
class Config:
    fixtures: list = field(default_factory=lambda: sorted(fixtures.ACCEPTANCE_FIXTURES))
    resolutions: list = field(default_factory=lambda: [8, 16, 24])
    samples: int = 50
    band: int = 3
    seed: int = 0
    out: str = ""


def twist(S):
    x = S.chart.mesh()
    return d_scalar(ScalarField(S.chart, 0.3 * np.sin(x[0] + x[-1]))) + Form.from_terms(S.chart, 1, {(0,): 0.5 + 0.2j})


def main(cfg: Config):
    rows = []
    for name in cfg.fixtures:
        for res in cfg.resolutions:
            start = time.perf_counter()
            S = fixtures.FIXTURES[name](res)
            M = MNTOperator(S, twist=twist(S) if S.theta_basic else None)
            rng = np.random.default_rng(cfg.seed)
            worst = 0.0
            for q in range(S.n - 1):
                for _ in range(cfg.samples):
                    g = np.array([random_trig_field(S.chart, rng, cfg.band) for _ in range(comb(S.n, q))])
                    worst = max(worst, float(np.linalg.norm(M.apply(q + 1, M.apply(q, g))) / np.linalg.norm(g)))
            rows.append({"fixture": name, "resolution": res, "n": S.n, "relative": worst,
                         "seconds": round(time.perf_counter() - start, 3)})
    emit({"config": asdict(cfg), "rows": rows}, cfg.out)


if __name__ == "__main__":
    main(parse(Config, doc=__doc__))
