"""Frame energy ratio against cap refinement, next to the Jacobian oracle."""

import math
from dataclasses import dataclass

from _common import config_from_args, write_csv

from dirac_lab.kernels import EnergyConfig, energy_ratio_oracle, energy_setup, frame_energy_ratio
from dirac_lab.spectral import GridSpec


@dataclass
class EnergyStudyConfig:
    """Frequency levels, the cap levels to refine through, and the lattice."""

    k: int = 4
    j: int = 4
    levels: tuple = (1, 2)
    kind: str = "DH"
    n_points: int = 256
    half_width: float = 16.0
    out: str = "results/frame_energy.csv"


def main(argv=None):
    cfg = config_from_args(EnergyStudyConfig, argv)
    grid = GridSpec(n_points=cfg.n_points, half_width=cfg.half_width)
    norm = "t_slices" if cfg.kind == "DH" else "x2_slices"
    predicted = 2.0 if cfg.kind == "DH" else math.sqrt(2.0)
    rows = []
    for l in cfg.levels:
        ec = EnergyConfig(cfg.k, cfg.j, l, 2.0 ** -l, cfg.kind)
        f, frame = energy_setup(ec, grid)
        ratio = frame_energy_ratio(f, frame, norm, ec)
        rows.append([l, ec.alpha_tilde, ratio, energy_ratio_oracle(f, frame, norm)])
        print(f"l={l} ratio {ratio:.4f} oracle {rows[-1][3]:.4f}")
    for a, b in zip(rows, rows[1:]):
        print(f"refinement {a[0]} -> {b[0]}: factor {b[2] / a[2]:.3f} (predicted {predicted:.3f})")
    write_csv(cfg.out, ["l", "alpha_tilde", "ratio", "oracle_ratio"], rows)


if __name__ == "__main__":
    main()
