"""Leafwise cohomology defect on the circle foliation of T^2 as the twist c dx1 varies."""
from dataclasses import asdict, dataclass, field

from _config import emit, parse
from fiskit import fixtures, oracles
from fiskit.forms import Form
from fiskit.l2 import leafwise_cohomology


@dataclass
class Config:
    resolution: int = 16
    twists: list = field(default_factory=lambda: ["0", "0.5", "1j", "2j", "0.5j", "0.3+0.2j", "-3j"])
    out: str = ""


def main(cfg: Config):
    S = fixtures.essentially_real_t2(cfg.resolution)
    rows = []
    for text in cfg.twists:
        c = complex(text)
        tw = Form.from_terms(S.chart, 1, {(0,): c}) if c else None
        rep = leafwise_cohomology(S, tw)
        rows.append({"c": text, "defect": rep.defect, "oracle": oracles.leafwise_t2_defect(cfg.resolution, c)})
    emit({"config": asdict(cfg), "rows": rows}, cfg.out)


if __name__ == "__main__":
    main(parse(Config, doc=__doc__))
