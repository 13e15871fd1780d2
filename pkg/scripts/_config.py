"""Turn a dataclass config into command-line flags."""
import argparse
import dataclasses
import json
import sys


def parse(cls, argv=None, doc=""):
    p = argparse.ArgumentParser(description=doc)
    for f in dataclasses.fields(cls):
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        flag = "--" + f.name.replace("_", "-")
        if isinstance(default, bool):
            p.add_argument(flag, action=argparse.BooleanOptionalAction, default=default)
        elif isinstance(default, (list, tuple)):
            p.add_argument(flag, nargs="+", type=type(default[0]), default=list(default))
        else:
            p.add_argument(flag, type=type(default), default=default)
    return cls(**vars(p.parse_args(argv)))


def emit(obj, out: str = ""):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
