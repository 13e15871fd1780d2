"""Command line: fiskit run | check | oracle."""
from __future__ import annotations

import argparse
import json
import sys

from . import scenario as scn
from .oracles import ORACLES


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_run(args) -> int:
    try:
        sc = scn.load(args.file)
    except scn.ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report = scn.run(sc, seed=args.seed, resolution=args.resolution, dump_dir=args.dump_matrices,
                     timings=args.timings)
    text = _dump_json(report)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for t in report["tasks"]:
        line = f"[{t['status']:>5}] {t['index']:2d} {t['task']}"
        if t["status"] == "error":
            line += f": {t['error']['type']}: {t['error']['message']}"
        for f in t.get("failures", []):
            line += f"\n        {f}"
        print(line, file=sys.stderr)
    return 0 if report["passed"] else 1


def cmd_check(args) -> int:
    try:
        sc = scn.load(args.file)
    except scn.ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{args.file}: ok ({len(sc.data['tasks'])} tasks)")
    return 0


def cmd_oracle(args) -> int:
    if args.name not in ORACLES:
        print(f"error: unknown oracle {args.name!r}; known: {', '.join(sorted(ORACLES))}", file=sys.stderr)
        return 2
    sys.stdout.write(_dump_json(ORACLES[args.name]()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fiskit", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run a scenario and emit a JSON report")
    r.add_argument("file")
    r.add_argument("--out", help="write the report here instead of stdout")
    r.add_argument("--seed", type=int, help="override the scenario seed")
    r.add_argument("--resolution", type=int, help="override the grid resolution")
    r.add_argument("--dump-matrices", metavar="DIR", help="export assembled matrices (Matrix Market)")
    r.add_argument("--timings", action="store_true", help="include wall-clock seconds per task")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("check", help="validate a scenario without running it")
    c.add_argument("file")
    c.set_defaults(func=cmd_check)
    o = sub.add_parser("oracle", help="print the expected values of a built-in oracle")
    o.add_argument("name", nargs="?", default="list")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
