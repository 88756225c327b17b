"""Reproducible experiment runner.

A run is described by a line-oriented configuration document::

    subcommand = solve
    seed = 7
    epsilon = 0.05        # experiment keys may sit at top level

    [grid]
    n_points = 128

    [solve]
    t_max = 4.0

The runner executes the harness, writes CSV and/or JSON reports and a
manifest with a sha256 per emitted file. Exit codes: 0 all checks pass,
1 a check failed, 2 usage or configuration error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import scipy

from . import __version__
from .spectral import GridSpec, SpectralError

EXIT_PASS, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
THREADS_ENV = "DIRAC_LAB_THREADS"
FORMATS = ("csv", "json", "both")


class ConfigError(ValueError):
    """Malformed or out-of-range configuration."""


# ---------------------------------------------------------------- value parsers


def _int(s: str) -> int:
    return int(s, 0)


def _float(s: str) -> float:
    return float(s)


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s: str) -> tuple:
    return tuple(int(v, 0) for v in s.split(",") if v.strip())


def _triples(s: str) -> tuple:
    out = []
    for part in s.split(";"):
        if part.strip():
            t = _ints(part)
            if len(t) != 3:
                raise ValueError(f"expected three integers, got {part.strip()!r}")
            out.append(t)
    return tuple(out)


def _choice(*options) -> Callable:
    def parse(s: str) -> str:
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s

    return parse


def _signs(s: str) -> tuple:
    t = _ints(s)
    if any(v not in (1, -1) for v in t):
        raise ValueError(f"signs must be +1 or -1, got {s!r}")
    return t


@dataclass(frozen=True)
class Param:
    parse: Callable
    default: object
    doc: str = ""


# ---------------------------------------------------------------- config


@dataclass
class RunConfig:
    subcommand: str
    grid: GridSpec
    params: dict
    output_dir: Path = Path("out")
    format: str = "both"
    seed: int = 0
    threads: int = 1

    def echo(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "grid": asdict(self.grid),
            "params": {k: list(v) if isinstance(v, tuple) else v for k, v in self.params.items()},
            "output_dir": str(self.output_dir),
            "format": self.format,
            "seed": self.seed,
            "threads": self.threads,
        }


@dataclass
class Outcome:
    """What a harness hands back to the runner."""

    checks: list = field(default_factory=list)  # (name, value, limit, passed)
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    documents: dict = field(default_factory=dict)  # name -> json-able
    blobs: dict = field(default_factory=dict)  # file name -> bytes

    def check(self, name: str, value: float, limit: float, passed: bool) -> None:
        self.checks.append((name, float(value), float(limit), bool(passed)))

    @property
    def passed(self) -> bool:
        return all(c[3] for c in self.checks)


@dataclass(frozen=True)
class Subcommand:
    params: dict
    grid: dict
    validate: Callable
    run: Callable


TOP_KEYS = {
    "subcommand": Param(str, None),
    "output_dir": Param(str, "out"),
    "format": Param(_choice(*FORMATS), "both"),
    "seed": Param(_int, 0),
    "threads": Param(_int, 1),
}
GRID_KEYS = {f.name: f for f in fields(GridSpec) if f.name != "seed"}


def _grid_parser(name: str) -> Callable:
    if name in ("n_points", "r_param"):
        return _int
    return _float


def _range(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration document.

    Raises
    ------
    ConfigError
        On a malformed line (with its number), an unknown key, a missing
        subcommand or a value outside the target operation's range.
    """
    top: dict = {}
    grid: dict = {}
    exp: dict = {}
    section = None
    where: dict = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith(";"):
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"line {n}: malformed section header {raw.strip()!r}")
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: malformed line {raw.strip()!r}, expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {n}: malformed line {raw.strip()!r}, expected key = value")
        if section is None and key in TOP_KEYS:
            target = top
        elif section == "grid":
            if key not in GRID_KEYS:
                raise ConfigError(f"line {n}: unknown grid key {key!r}")
            target = grid
        else:
            target = exp
        if key in target:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        target[key] = value
        where[(id(target), key)] = (n, section)

    name = top.get("subcommand")
    if not name:
        raise ConfigError("missing subcommand")
    if name not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {name!r}; expected one of {', '.join(SUBCOMMANDS)}")
    sub = SUBCOMMANDS[name]

    def conv(table, key, spec, parse):
        n, _ = where[(id(table), key)]
        try:
            return parse(table[key])
        except ValueError as exc:
            raise ConfigError(f"line {n}: bad value for {key!r}: {exc}") from None

    for key, (n, sec) in sorted(((k, v) for (i, k), v in where.items() if i == id(exp)), key=lambda kv: kv[1][0]):
        if sec is not None and sec != name:
            raise ConfigError(f"line {n}: section [{sec}] does not match subcommand {name!r}")
        if key not in sub.params:
            raise ConfigError(f"line {n}: unknown key {key!r} for {name}")

    values = {k: v.default for k, v in TOP_KEYS.items()}
    for k in top:
        values[k] = conv(top, k, TOP_KEYS[k], TOP_KEYS[k].parse)
    params = {k: p.default for k, p in sub.params.items()}
    for k in exp:
        params[k] = conv(exp, k, sub.params[k], sub.params[k].parse)
    gvals = dict(sub.grid)
    for k in grid:
        gvals[k] = conv(grid, k, None, _grid_parser(k))
    _range(values["threads"] >= 1, f"threads = {values['threads']} must be at least 1")
    _range(0 <= values["seed"] < 2 ** 64, f"seed = {values['seed']} must be an unsigned 64-bit integer")
    try:
        gspec = GridSpec(**gvals, seed=values["seed"])
    except SpectralError as exc:
        raise ConfigError(f"grid out of range (GridSpec precondition): {exc}") from None
    cfg = RunConfig(
        subcommand=name,
        grid=gspec,
        params=params,
        output_dir=Path(values["output_dir"]),
        format=values["format"],
        seed=values["seed"],
        threads=values["threads"],
    )
    try:
        sub.validate(cfg)
    except SpectralError as exc:
        raise ConfigError(f"{name}: out-of-range value: {exc}") from None
    return cfg


# ---------------------------------------------------------------- harnesses


def _no_check(cfg: RunConfig) -> None:
    pass


ALGEBRA_TOL = 1e-12


def _run_algebra(cfg: RunConfig, pool) -> Outcome:
    from .spinor import algebra_checks, null_form_sweep

    p = cfg.params
    out = Outcome()
    res = algebra_checks(p["n_xi"], p["n_fields"], cfg.grid, cfg.seed)
    for name, v in res.items():
        out.check(name, v, ALGEBRA_TOL, v <= ALGEBRA_TOL)
    nf = null_form_sweep(p["n_pairs"], cfg.seed)
    out.check("null_form_constant", nf["C"], 4.0, nf["C"] <= 4.0)
    out.check("null_form_octave_spread", nf["spread"], 2.0, nf["spread"] <= 2.0)
    out.tables["null_form_octaves"] = (["octave_lo", "constant"], [[k, v] for k, v in sorted(nf["octaves"].items())])
    out.documents["algebra"] = {"defects": res, "null_form": nf}
    return out


DESK_K = (4, 10)


def _validate_decay(cfg: RunConfig) -> None:
    from .kernels import BOUNDS, default_spec

    p = cfg.params
    k = p["k"]
    lo, hi = DESK_K
    _range(lo <= k <= hi, f"k = {k} outside the desk range [{lo}, {hi}] (verify_decay precondition)")
    _range(len(p["bounds"]) > 0, "bounds must name at least one decay bound")
    for b in p["bounds"]:
        _range(b in BOUNDS, f"unknown bound {b!r}; expected one of {', '.join(BOUNDS)}")
        if b == "bigk-near":
            _range(k >= 5, "bigk-near needs k >= 5: its region 2^(3-k) <= |(t,x)| <= 2^(k-3) is empty below")
        default_spec(b, k)
    _range(p["n_radii"] >= 4, "n_radii must be at least 4 for a regression")


def _run_decay(cfg: RunConfig, pool) -> Outcome:
    from .kernels import default_sampler, default_spec, verify_decay

    p = cfg.params

    def one(b):
        spec = default_spec(b, p["k"])
        return verify_decay(spec, b, default_sampler(b, spec, p["n_radii"], cfg.seed), tolerance=p["tolerance"])

    out = Outcome()
    rows = []
    for b, rep in zip(p["bounds"], pool.map(one, p["bounds"])):
        limit = rep.expected + (p["tolerance"] if rep.kind == "exact" else 0.1)
        out.check(f"{b}_slope", rep.slope, limit, rep.passed)
        rows.append([b, rep.kind, rep.expected, rep.slope, rep.slope_stderr, rep.fitted_constant, rep.constant_spread, rep.passed])
        out.tables[f"decay_{b}"] = (None, list(rep.csv_rows()))
        out.documents[f"decay_{b}"] = json.loads(rep.to_json())
    out.tables["decay_summary"] = (
        ["bound", "kind", "exponent", "slope", "slope_stderr", "fitted_constant", "constant_spread", "passed"],
        rows,
    )
    return out


def _validate_majorize(cfg: RunConfig) -> None:
    from .decomp import Cap, j_window

    p = cfg.params
    _range(DESK_K[0] <= p["k"] <= DESK_K[1], f"k = {p['k']} outside the desk range {list(DESK_K)}")
    lo, hi = j_window(p["sub_bits"])
    _range(lo <= p["j"] <= hi, f"j = {p['j']} outside [{lo}, {hi}] (frame_majorization_check precondition)")
    Cap(p["l"], 0)
    _range(p["samples"] >= 1, "samples must be positive")
    k, j, l = p["case1_k"], p["case1_j"], p["case1_l"]
    _range(j <= k - 10 and l <= j - 10, f"case 1 needs j <= k - 10 and l <= j - 10, got k={k}, j={j}, l={l}")


def _run_majorize(cfg: RunConfig, pool) -> Outcome:
    from .decomp import Cap, Frame
    from .kernels import DeskScale, case1_window_check, frame_majorization_check, surface_round_trip

    p = cfg.params
    out = Outcome()
    rep = frame_majorization_check(p["k"], Cap(p["l"], 0), p["j"], p["samples"], desk=DeskScale(sub_bits=p["sub_bits"]), seed=cfg.seed)
    out.check("p1_failures", rep.p1_failures, 0, rep.p1_failures == 0)
    out.check("p2_constant", rep.fitted_constant, 8.0, rep.fitted_constant <= 8.0)
    out.tables["majorization_samples"] = (
        ["t", "x1", "x2", "best_abs_t_theta", "abs_t_lambda", "covering_limit"],
        [list(s) for s in rep.samples],
    )
    out.documents["majorization"] = json.loads(rep.to_json()) | {
        "p1_premise": rep.p1_premise,
        "frame_count": rep.frame_count,
    }
    rows = []
    for lam in p["speeds"]:
        fr = Frame(lam, (0.6, 0.8))
        rt = surface_round_trip(fr, cfg.grid)
        rows.append([lam, rt["point_residual"], rt["root_residual"], rt["root_mismatch"], rt["near_tangent"]])
        worst = max(rt["point_residual"], rt["root_residual"], rt["root_mismatch"])
        out.check(f"surface_round_trip_speed_{lam!r}", worst, 1e-10, worst <= 1e-10)
    out.tables["surface_round_trip"] = (["speed", "point_residual", "root_residual", "root_mismatch", "near_tangent"], rows)
    frac, lo, hi = case1_window_check(p["case1_k"], p["case1_j"], p["case1_l"], p["case1_count"], cfg.seed)
    out.check("case1_window_fraction", frac, 1.0, frac == 1.0)
    out.documents["case1"] = {"fraction": frac, "min": lo, "max": hi}
    return out


def _energy_configs(p):
    from .kernels import EnergyConfig

    l = p["l"]
    return [EnergyConfig(p["k"], p["j"], lv, 2.0 ** (-lv), p["kind"]) for lv in (l, l + 1)]


def _run_energy(cfg: RunConfig, pool) -> Outcome:
    from .kernels import energy_ratio_oracle, energy_setup, frame_energy_ratio

    p = cfg.params
    norm = "t_slices" if p["kind"] == "DH" else "x2_slices"
    out = Outcome()
    rows = []
    for ec in _energy_configs(p):
        f, fr = energy_setup(ec, cfg.grid)
        r = frame_energy_ratio(f, fr, norm, ec)
        rows.append([ec.l, ec.alpha, ec.alpha_tilde, r, energy_ratio_oracle(f, fr, norm)])
    factor = rows[1][3] / rows[0][3]
    predicted = 2.0 if p["kind"] == "DH" else math.sqrt(2.0)
    out.check("refinement_factor", factor, predicted, abs(factor / predicted - 1) <= 0.5)
    out.tables["frame_energy"] = (["l", "alpha", "alpha_tilde", "ratio", "oracle_ratio"], rows)
    out.documents["frame_energy"] = {"factor": factor, "predicted": predicted, "kind": p["kind"]}
    return out


def _run_resonance(cfg: RunConfig, pool) -> Outcome:
    from .decomp import resonance_scaling, resonance_window_check

    p = cfg.params
    out = Outcome()
    sk, sl, rows = resonance_scaling()
    tol = p["tolerance"]
    out.check("k_slope", sk, 1.0, abs(sk - 1.0) <= tol)
    out.check("l_slope", sl, -2.0, abs(sl + 2.0) <= tol)
    frac, lo, hi = resonance_window_check(p["n_configs"], cfg.seed, jitter=p["jitter"])
    out.check("window_fraction", frac, 1.0, frac == 1.0)
    out.tables["resonance_scaling"] = (["k", "l", "resonance"], [list(r) for r in rows])
    out.documents["resonance"] = {"k_slope": sk, "l_slope": sl, "window": {"fraction": frac, "min_log2_dev": lo, "max_log2_dev": hi}}
    return out


SOLVER_GRID_DEFAULTS = {"n_points": 128, "half_width": 8 * math.pi, "dt": 0.01, "t_max": 4.0}


def _solve_config(cfg: RunConfig, t_max=None):
    from .solver import SolveConfig

    p = cfg.params
    return SolveConfig(
        epsilon=p["epsilon"],
        t_max=cfg.grid.t_max if t_max is None else t_max,
        dt=cfg.grid.dt,
        picard_depth=p["picard_depth"],
        integrator=p["integrator"],
        dealias=p["dealias"],
    )


def _validate_solve(cfg: RunConfig) -> None:
    p = cfg.params
    _range(p["epsilon"] > 0, f"epsilon = {p['epsilon']} violates the picard_iterate precondition: epsilon > 0 (small data)")
    _solve_config(cfg).n_steps


def _solve_data(cfg: RunConfig):
    from .solver import make_data

    p = cfg.params
    return make_data(cfg.grid, p["epsilon"], k=p["k"], seed=cfg.seed, branches=p["branches"])


def _run_solve(cfg: RunConfig, pool) -> Outcome:
    from .solver import charge_series, picard_iterate, summary_csv, write_checkpoint, evolve

    sc = _solve_config(cfg)
    data = _solve_data(cfg)
    out = Outcome()
    if sc.integrator == "duhamel_picard":
        traj, factors = picard_iterate(data, sc)
        late = [f for f in factors[1:]]
        worst = max(late) if late else 0.0
        out.check("contraction_factor", worst, 0.5, worst < 0.5)
        out.documents["picard"] = {"factors": list(factors)}
    else:
        traj = evolve(data, sc)
    q = charge_series(traj)
    drift = float(np.max(np.abs(q - q[0])) / q[0])
    out.check("charge_drift", drift, 1e-6, drift <= 1e-6)
    text = summary_csv(traj)
    out.tables["solve_summary"] = (None, list(csv.reader(io.StringIO(text))))
    buf = io.BytesIO()
    write_checkpoint(traj, buf)
    out.blobs["trajectory.bin"] = buf.getvalue()
    return out


def _run_scatter(cfg: RunConfig, pool) -> Outcome:
    from .solver import distance_to_free, evolve, total_variation

    p = cfg.params
    data = _solve_data(cfg)
    out = Outcome()
    rows = []
    for horizon in (p["horizon"], 2 * p["horizon"]):
        traj = evolve(data, _solve_config(cfg, t_max=horizon))
        rows.append([horizon, total_variation(traj), distance_to_free(traj)])
    growth = rows[1][1] / rows[0][1] - 1
    out.check("total_variation_growth", growth, 0.1, growth <= 0.1)
    out.tables["scatter"] = (["horizon", "total_variation", "distance_to_free"], rows)
    return out


def _validate_scatter(cfg: RunConfig) -> None:
    _validate_solve(cfg)
    _range(cfg.params["horizon"] > 0, "horizon must be positive")
    _solve_config(cfg, t_max=cfg.params["horizon"]).n_steps


def _scale(p, n_default, box_default):
    from .norms import HarnessScale

    n = p["n_points"] or n_default
    box = p["box"] or box_default
    return HarnessScale(n_points=n, box=box)


def _ratio_rows(reports):
    rows = []
    for rep in reports:
        params = json.dumps(rep.dyadic_params, sort_keys=True)
        rows.append([params, rep.max_ratio, rep.median_ratio])
    return ["params", "max_ratio", "median_ratio"], rows


def _validate_bilinear(cfg: RunConfig) -> None:
    p = cfg.params
    if p["mode"] == "sweep":
        _range(len(p["k2"]) >= 2, "a sweep needs at least two values of k2")
        _range(p["gap"] >= 0, "gap must be non-negative (bilinear_ratio needs k1 <= k2)")
    else:
        _range(len(p["levels"]) >= 2, "cap mode needs at least two cap levels")
        _range(min(p["levels"]) >= 1, "cap levels start at 1")
    _range(p["n_seeds"] >= 1, "n_seeds must be positive")


def _run_bilinear(cfg: RunConfig, pool) -> Outcome:
    from .norms import bilinear_ratio, dyadic_sweep

    p = cfg.params
    out = Outcome()
    if p["mode"] == "sweep":
        sc = _scale(p, 128, 12.0)
        reps = list(pool.map(lambda k2: bilinear_ratio(k2 - p["gap"], k2, signs=p["signs"], n_seeds=p["n_seeds"], scale=sc), p["k2"]))
        sw = dyadic_sweep(reps)
        spread = max(r.max_ratio for r in reps) / min(r.max_ratio for r in reps)
        out.check("dyadic_spread", spread, 2.0, sw.stable)
    else:
        sc = _scale(p, 256, 8.0)
        reps = list(pool.map(lambda l: bilinear_ratio(p["cap_k1"], p["cap_k2"], l=l, signs=p["signs"], n_seeds=p["n_seeds"], scale=sc), p["levels"]))
        for a, b in zip(reps, reps[1:]):
            gain = a.max_ratio / b.max_ratio
            l = a.dyadic_params["l"]
            target = math.sqrt(2.0)
            out.check(f"cap_gain_l{l}", gain, target, abs(gain / target - 1) <= 0.4)
    out.tables["bilinear"] = _ratio_rows(reps)
    out.documents["bilinear"] = [json.loads(r.to_json()) for r in reps]
    return out


def _validate_trilinear(cfg: RunConfig) -> None:
    p = cfg.params
    _range(len(p["triples"]) >= 2, "need at least two index triples")
    for t in p["triples"]:
        _range(t[0] <= t[1] <= t[2], f"trilinear_ratio needs k1 <= k2 <= k3, got {t}")


def _run_trilinear(cfg: RunConfig, pool) -> Outcome:
    from .norms import dyadic_sweep, trilinear_ratio

    p = cfg.params
    sc = _scale(p, 128, 12.0)
    reps = list(
        pool.map(lambda t: trilinear_ratio(*t, p=p["p"], signs=p["signs"], n_seeds=p["n_seeds"], mode=p["mode"], scale=sc), p["triples"])
    )
    sw = dyadic_sweep(reps)
    out = Outcome()
    spread = max(r.max_ratio for r in reps) / min(r.max_ratio for r in reps)
    out.check("dyadic_spread", spread, 2.0, sw.stable)
    out.tables["trilinear"] = _ratio_rows(reps)
    out.documents["trilinear"] = [json.loads(r.to_json()) for r in reps]
    return out


def _run_strichartz(cfg: RunConfig, pool) -> Outcome:
    from .norms import dyadic_sweep, strichartz_ratio

    p = cfg.params
    sc = _scale(p, 128, 12.0)
    reps = list(pool.map(lambda k: strichartz_ratio(k, p["p"], p["q"], p["sign"], p["n_seeds"], sc), p["ks"]))
    sw = dyadic_sweep(reps)
    out = Outcome()
    spread = max(r.max_ratio for r in reps) / min(r.max_ratio for r in reps)
    out.check("dyadic_spread", spread, 2.0, sw.stable)
    out.tables["strichartz"] = _ratio_rows(reps)
    out.documents["strichartz"] = [json.loads(r.to_json()) for r in reps]
    return out


def _validate_strichartz(cfg: RunConfig) -> None:
    p = cfg.params
    _range(len(p["ks"]) >= 2, "need at least two levels")
    _range(p["p"] >= 2 and p["q"] >= 2, "strichartz_ratio needs p, q >= 2")
    _range(p["sign"] in (1, -1), "sign must be +1 or -1")


REPORT_PARTS = ("verify-algebra", "frame-majorize", "resonance", "solve", "strichartz")


def _run_report(cfg: RunConfig, pool) -> Outcome:
    """Quick pass over several harnesses with reduced sizes; parts are prefixed in the output."""
    p = cfg.params
    overrides = {
        "verify-algebra": {"n_xi": p["n_xi"], "n_fields": 4, "n_pairs": p["n_xi"]},
        "frame-majorize": {"samples": 2000, "case1_count": 2000},
        "resonance": {"n_configs": 200},
        "solve": {},
        "strichartz": {"ks": (4, 5, 6), "n_seeds": 1},
    }
    grids = {"solve": {"t_max": p["solve_t_max"], "dt": 0.02}}
    out = Outcome()
    for part in REPORT_PARTS:
        sub = SUBCOMMANDS[part]
        params = {k: v.default for k, v in sub.params.items()} | overrides[part]
        grid = GridSpec(**(dict(sub.grid) | grids.get(part, {})), seed=cfg.seed)
        child = RunConfig(part, grid, params, cfg.output_dir, cfg.format, cfg.seed, cfg.threads)
        sub.validate(child)
        res = sub.run(child, pool)
        prefix = part.replace("-", "_")
        out.checks += [(f"{prefix}.{c[0]}", *c[1:]) for c in res.checks]
        out.tables |= {f"{prefix}.{k}": v for k, v in res.tables.items()}
        out.documents |= {f"{prefix}.{k}": v for k, v in res.documents.items()}
        out.blobs |= {f"{prefix}.{k}": v for k, v in res.blobs.items()}
    return out


SUBCOMMANDS: dict[str, Subcommand] = {
    "verify-algebra": Subcommand(
        {
            "n_xi": Param(_int, 100_000, "sampled frequencies"),
            "n_fields": Param(_int, 10, "random spinor fields"),
            "n_pairs": Param(_int, 100_000, "null-form frequency pairs"),
        },
        {"n_points": 64},
        lambda c: _range(min(c.params["n_xi"], c.params["n_fields"], c.params["n_pairs"]) >= 1, "sample counts must be positive"),
        _run_algebra,
    ),
    "kernel-decay": Subcommand(
        {
            "bounds": Param(lambda s: tuple(v.strip() for v in s.split(",") if v.strip()), ("bigk-near",)),
            "k": Param(_int, 6),
            "n_radii": Param(_int, 12),
            "tolerance": Param(_float, 0.15),
        },
        {},
        _validate_decay,
        _run_decay,
    ),
    "frame-majorize": Subcommand(
        {
            "k": Param(_int, 4),
            "l": Param(_int, 4),
            "j": Param(_int, 64),
            "sub_bits": Param(_int, 6),
            "samples": Param(_int, 10_000),
            "speeds": Param(lambda s: tuple(float(v) for v in s.split(",") if v.strip()), (0.0, 0.5, 1.0)),
            "case1_k": Param(_int, 23),
            "case1_j": Param(_int, 13),
            "case1_l": Param(_int, 3),
            "case1_count": Param(_int, 10_000),
        },
        {"n_points": 128, "half_width": 8.0},
        _validate_majorize,
        _run_majorize,
    ),
    "frame-energy": Subcommand(
        {
            "k": Param(_int, 4),
            "j": Param(_int, 4),
            "l": Param(_int, 1),
            "kind": Param(_choice("DH", "DH2"), "DH"),
        },
        {"n_points": 256, "half_width": 16.0},
        lambda c: _energy_configs(c.params),
        _run_energy,
    ),
    "resonance": Subcommand(
        {
            "n_configs": Param(_int, 1000),
            "jitter": Param(_float, 0.125),
            "tolerance": Param(_float, 0.1),
        },
        {},
        lambda c: _range(c.params["n_configs"] >= 1 and 0 <= c.params["jitter"] < 0.5, "n_configs >= 1 and jitter in [0, 1/2)"),
        _run_resonance,
    ),
    "solve": Subcommand(
        {
            "epsilon": Param(_float, 0.05),
            "k": Param(_int, -1),
            "branches": Param(_choice("both", "plus", "minus"), "both"),
            "integrator": Param(_choice("strang_split", "duhamel_picard"), "strang_split"),
            "picard_depth": Param(_int, 8),
            "dealias": Param(_bool, True),
        },
        SOLVER_GRID_DEFAULTS,
        _validate_solve,
        _run_solve,
    ),
    "scatter": Subcommand(
        {
            "epsilon": Param(_float, 0.05),
            "k": Param(_int, -1),
            "branches": Param(_choice("both", "plus", "minus"), "both"),
            "integrator": Param(_choice("strang_split"), "strang_split"),
            "picard_depth": Param(_int, 8),
            "dealias": Param(_bool, True),
            "horizon": Param(_float, 8.0),
        },
        SOLVER_GRID_DEFAULTS | {"dt": 0.02},
        _validate_scatter,
        _run_scatter,
    ),
    "bilinear": Subcommand(
        {
            "mode": Param(_choice("sweep", "cap"), "sweep"),
            "k2": Param(_ints, (4, 5, 6, 7)),
            "gap": Param(_int, 2),
            "cap_k1": Param(_int, 7),
            "cap_k2": Param(_int, 7),
            "levels": Param(_ints, (1, 2, 3, 4)),
            "signs": Param(_signs, (1, 1)),
            "n_seeds": Param(_int, 3),
            "n_points": Param(_int, 0, "0 picks the mode default"),
            "box": Param(_float, 0.0, "0 picks the mode default"),
        },
        {},
        _validate_bilinear,
        _run_bilinear,
    ),
    "trilinear": Subcommand(
        {
            "mode": Param(_choice("TRI1", "TRI2"), "TRI1"),
            "triples": Param(_triples, ((4, 4, 6), (4, 5, 6), (4, 6, 6))),
            "p": Param(_float, 1.5),
            "signs": Param(_signs, (1, 1, 1)),
            "n_seeds": Param(_int, 3),
            "n_points": Param(_int, 0),
            "box": Param(_float, 0.0),
        },
        {},
        _validate_trilinear,
        _run_trilinear,
    ),
    "strichartz": Subcommand(
        {
            "ks": Param(_ints, (4, 5, 6, 7)),
            "p": Param(_float, 4.0),
            "q": Param(_float, math.inf),
            "sign": Param(_int, 1),
            "n_seeds": Param(_int, 3),
            "n_points": Param(_int, 0),
            "box": Param(_float, 0.0),
        },
        {},
        _validate_strichartz,
        _run_strichartz,
    ),
    "report": Subcommand(
        {
            "n_xi": Param(_int, 10_000),
            "solve_t_max": Param(_float, 1.0),
        },
        {},
        lambda c: _range(c.params["n_xi"] >= 1 and c.params["solve_t_max"] > 0, "n_xi and solve_t_max must be positive"),
        _run_report,
    ),
}


# ---------------------------------------------------------------- output


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return str(v)


def csv_bytes(header, rows) -> bytes:
    """RFC-4180 text: CRLF line ends, minimal quoting, shortest round-trip floats."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    if header is not None:
        w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue().encode("utf-8")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (Path, tuple)):
        return str(o) if isinstance(o, Path) else list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def json_bytes(doc) -> bytes:
    return (json.dumps(doc, sort_keys=True, indent=1, default=_json_default) + "\n").encode("utf-8")


def _write(out_dir: Path, name: str, data: bytes, written: dict) -> None:
    path = out_dir / name
    path.write_bytes(data)
    written[name] = hashlib.sha256(data).hexdigest()


def versions() -> dict:
    return {
        "dirac_lab": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def emit(cfg: RunConfig, outcome: Outcome, wall: float) -> dict:
    """Write reports, then the manifest listing every file with its sha256."""
    out_dir = cfg.output_dir
    written: dict = {}
    check_rows = [list(c) for c in outcome.checks]
    if cfg.format in ("csv", "both"):
        _write(out_dir, "checks.csv", csv_bytes(["check", "value", "limit", "passed"], check_rows), written)
        for name, (header, rows) in outcome.tables.items():
            _write(out_dir, f"{name}.csv", csv_bytes(header, rows), written)
    if cfg.format in ("json", "both"):
        doc = {"checks": [dict(zip(("check", "value", "limit", "passed"), c)) for c in outcome.checks], "passed": outcome.passed}
        _write(out_dir, "checks.json", json_bytes(doc), written)
        for name, d in outcome.documents.items():
            _write(out_dir, f"{name}.json", json_bytes(d), written)
    for name, data in outcome.blobs.items():
        _write(out_dir, name, data, written)
    manifest = {
        "config": cfg.echo(),
        "seed": cfg.seed,
        "versions": versions(),
        "wall_time_s": wall,
        "passed": outcome.passed,
        "files": dict(sorted(written.items())),
    }
    (out_dir / "manifest.json").write_bytes(json_bytes(manifest))
    return manifest


def run(cfg: RunConfig) -> int:
    """Execute the configured harness and write its artifacts; return the exit code."""
    try:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        probe = cfg.output_dir / ".write-probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        return _fail(None, EXIT_USAGE, "ConfigError", f"output_dir {cfg.output_dir} is not writable: {exc}")
    start = time.perf_counter()
    try:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            outcome = SUBCOMMANDS[cfg.subcommand].run(cfg, pool)
    except (SpectralError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        return _fail(cfg.output_dir, EXIT_NUMERIC, type(exc).__name__, str(exc))
    emit(cfg, outcome, time.perf_counter() - start)
    for name, value, limit, ok in outcome.checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {value:.6g} (limit {limit:.6g})")
    return EXIT_PASS if outcome.passed else EXIT_CHECK


def _fail(out_dir: Optional[Path], code: int, kind: str, message: str) -> int:
    record = {"error": kind, "message": message, "exit_code": code}
    data = json_bytes(record)
    if out_dir is not None:
        try:
            (out_dir / "error.json").write_bytes(data)
        except OSError:
            pass
    sys.stderr.write(data.decode())
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dirac-lab", description="Run a dirac_lab experiment from a configuration file.")
    ap.add_argument("--config", required=True, help="configuration document (key = value lines)")
    ap.add_argument("--seed", type=int, help="override the configured seed (unsigned 64-bit)")
    ap.add_argument("--out", help="override the output directory")
    ap.add_argument("--threads", type=int, help=f"worker pool size; {THREADS_ENV} overrides the config too")
    ap.add_argument("--format", choices=FORMATS, help="report format")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        return _fail(None, EXIT_USAGE, "ConfigError", f"cannot read config: {exc}")
    try:
        cfg = parse_config(text)
        if args.seed is not None:
            _range(0 <= args.seed < 2 ** 64, f"--seed {args.seed} must be an unsigned 64-bit integer")
            cfg.seed = args.seed
            cfg.grid = GridSpec(**(asdict(cfg.grid) | {"seed": args.seed}))
        if args.out is not None:
            cfg.output_dir = Path(args.out)
        if args.format is not None:
            cfg.format = args.format
        env = os.environ.get(THREADS_ENV)
        threads = args.threads if args.threads is not None else (int(env) if env else cfg.threads)
        _range(threads >= 1, f"threads = {threads} must be at least 1")
        cfg.threads = threads
    except (ConfigError, ValueError) as exc:
        return _fail(None, EXIT_USAGE, "ConfigError", str(exc))
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
