"""Free-wave ratio harnesses: Strichartz, bilinear and trilinear sweeps over dyadic levels."""

from dataclasses import dataclass

from _common import config_from_args, write_csv

from dirac_lab.norms import HarnessScale, bilinear_ratio, strichartz_ratio, trilinear_ratio


@dataclass
class HarnessConfig:
    """Levels for each sweep and the lattice the free waves live on."""

    ks: tuple = (4, 5, 6, 7)
    gap: int = 2
    tri_low: int = 4
    tri_high: int = 6
    n_seeds: int = 3
    n_points: int = 128
    box: float = 12.0
    out: str = "results/norm_harnesses.csv"


def main(argv=None):
    cfg = config_from_args(HarnessConfig, argv)
    scale = HarnessScale(n_points=cfg.n_points, box=cfg.box)
    reports = []
    for k in cfg.ks:
        reports.append(("strichartz", strichartz_ratio(k, n_seeds=cfg.n_seeds, scale=scale)))
        reports.append(("bilinear", bilinear_ratio(k - cfg.gap, k, n_seeds=cfg.n_seeds, scale=scale)))
    for k2 in range(cfg.tri_low, cfg.tri_high + 1):
        reports.append(("TRI1", trilinear_ratio(cfg.tri_low, k2, cfg.tri_high, n_seeds=cfg.n_seeds, scale=scale)))
    rows = []
    for name, rep in reports:
        params = " ".join(f"{k}={v}" for k, v in sorted(rep.dyadic_params.items()) if k != "scale")
        rows.append([name, params, rep.max_ratio, rep.median_ratio])
        print(f"{name:10s} {params:40s} max {rep.max_ratio:.4f} median {rep.median_ratio:.4f}")
    for name in ("strichartz", "bilinear", "TRI1"):
        ratios = [r.max_ratio for n, r in reports if n == name]
        print(f"{name:10s} dyadic spread {max(ratios) / min(ratios):.3f}")
    write_csv(cfg.out, ["harness", "params", "max_ratio", "median_ratio"], rows)


if __name__ == "__main__":
    main()
