"""Shared helpers for the experiment scripts: dataclass configs from argv, CSV output."""

import argparse
import dataclasses
from pathlib import Path

from dirac_lab.cli import csv_bytes


def _parser_for(kind):
    if kind in (int, "int"):
        return int
    if kind in (float, "float"):
        return float
    if kind in (tuple, "tuple", "tuple[int, ...]"):
        return lambda s: tuple(int(v) for v in s.split(",") if v.strip())
    return str


def config_from_args(cls, argv=None, description=None):
    """Build ``cls`` from its defaults, overridden by ``--field value`` flags."""
    ap = argparse.ArgumentParser(description=description or cls.__doc__)
    for f in dataclasses.fields(cls):
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        ap.add_argument(f"--{f.name.replace('_', '-')}", type=_parser_for(f.type), default=default, help=f"default {default!r}")
    return cls(**vars(ap.parse_args(argv)))


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(csv_bytes(header, rows))
    print(f"wrote {path}")
    return path
