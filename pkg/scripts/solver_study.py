"""Charge drift, Strang order, cubic scaling and scattering saturation of the solver."""

import math
from dataclasses import dataclass

import numpy as np
from _common import config_from_args, write_csv

from dirac_lab.solver import (
    SOLVER_GRID,
    SolveConfig,
    charge_series,
    cubic_scaling_check,
    evolve,
    make_data,
    total_variation,
)


@dataclass
class SolverStudyConfig:
    """Data size, time steps and horizons for the solver study."""

    epsilon: float = 0.05
    t_max: float = 4.0
    dt: float = 0.01
    order_steps: str = "0.05,0.025,0.0125"
    scaling_epsilons: str = "0.02,0.04,0.08"
    horizon: float = 8.0
    seed: int = 0
    out: str = "results/solver_study.csv"


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def main(argv=None):
    cfg = config_from_args(SolverStudyConfig, argv)
    data = make_data(SOLVER_GRID, cfg.epsilon, seed=cfg.seed)
    rows = []

    q = charge_series(evolve(data, SolveConfig(epsilon=cfg.epsilon, t_max=cfg.t_max, dt=cfg.dt)))
    rows.append(["charge_drift", float(np.abs(q / q[0] - 1).max())])

    def end(dt):
        return evolve(data, SolveConfig(epsilon=cfg.epsilon, t_max=1.0, dt=dt)).values[-1]

    ref = end(1e-3)
    errs = [np.linalg.norm(end(dt) - ref) for dt in _floats(cfg.order_steps)]
    for i, (a, b) in enumerate(zip(errs, errs[1:])):
        rows.append([f"strang_order_{i}", math.log2(a / b)])

    rec = cubic_scaling_check(_floats(cfg.scaling_epsilons), SolveConfig(t_max=cfg.t_max, dt=cfg.dt), seed=cfg.seed)
    rows.append(["cubic_slope", rec.slope])

    tv = []
    for horizon in (cfg.horizon, 2 * cfg.horizon):
        tv.append(total_variation(evolve(data, SolveConfig(epsilon=cfg.epsilon, t_max=horizon, dt=0.02))))
        rows.append([f"total_variation_T{horizon:g}", tv[-1]])
    rows.append(["total_variation_growth", tv[1] / tv[0] - 1])

    for name, value in rows:
        print(f"{name:24s} {value:.6g}")
    write_csv(cfg.out, ["quantity", "value"], rows)


if __name__ == "__main__":
    main()
