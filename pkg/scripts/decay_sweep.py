"""Fit kernel decay slopes over a range of dyadic levels."""

import time
from dataclasses import dataclass

from _common import config_from_args, write_csv

from dirac_lab.kernels import BOUNDS, default_sampler, default_spec, verify_decay


@dataclass
class DecayConfig:
    """Which decay bounds to fit, at which levels, and where to write the table."""

    bounds: str = "k99-1,k99-2,bigk-near,ang3,ang4"
    ks: tuple = (6, 8)
    n_radii: int = 12
    seed: int = 0
    out: str = "results/decay_sweep.csv"


def main(argv=None):
    cfg = config_from_args(DecayConfig, argv)
    rows = []
    for bound in (b.strip() for b in cfg.bounds.split(",") if b.strip()):
        for k in cfg.ks:
            if bound == "bigk-near" and k < 5:
                continue
            start = time.perf_counter()
            spec = default_spec(bound, k)
            rep = verify_decay(spec, bound, default_sampler(bound, spec, cfg.n_radii, cfg.seed))
            elapsed = time.perf_counter() - start
            rows.append([bound, k, BOUNDS[bound].exponent, rep.slope, rep.slope_stderr, rep.constant_spread, rep.passed, elapsed])
            print(f"{bound:10s} k={k:2d} slope {rep.slope:+.3f} (expected {BOUNDS[bound].exponent:+.1f}) {'pass' if rep.passed else 'FAIL'} {elapsed:.1f} s")
    write_csv(cfg.out, ["bound", "k", "exponent", "slope", "slope_stderr", "constant_spread", "passed", "seconds"], rows)


if __name__ == "__main__":
    main()
