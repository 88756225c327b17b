import io
import math

import numpy as np
import pytest

from dirac_lab.solver import (
    SOLVER_GRID,
    ContractionError,
    SolveConfig,
    branches,
    charge,
    charge_series,
    contraction_factors,
    evolve,
    free_evolution,
    make_data,
    picard_iterate,
    projection_defect,
    read_checkpoint,
    rhs_projected,
    scattering_profile,
    sobolev_half,
    solve,
    summary_csv,
    total_variation,
    write_checkpoint,
)
from dirac_lab.spectral import GridSpec, SpectralError
from dirac_lab.spinor import BETA, SpinorField, apply_projection, beta_density, random_spinor


def rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))


def l2_sup(a, b, grid):
    return float(np.sqrt(grid.dx ** 2 * np.sum(np.abs(a - b) ** 2, axis=(-3, -2, -1))).max())


@pytest.fixture(scope="module")
def data():
    return make_data(SOLVER_GRID, 0.05)


# ---------------------------------------------------------------- data and config


def test_make_data_size_and_branches():
    g = SOLVER_GRID
    plus, minus = make_data(g, 0.03, seed=2)
    assert sobolev_half(plus + minus) == pytest.approx(0.03, rel=1e-12)
    assert projection_defect(plus, 1) <= 1e-12
    assert projection_defect(minus, -1) <= 1e-12
    only_plus = make_data(g, 0.03, branches="plus")
    assert only_plus[1].l2() == 0.0
    with pytest.raises(SpectralError):
        make_data(g, 0.03, branches="left")


def test_config_validation():
    with pytest.raises(SpectralError, match="epsilon"):
        SolveConfig(epsilon=-1.0)
    with pytest.raises(SpectralError):
        SolveConfig(integrator="rk4")
    with pytest.raises(SpectralError):
        SolveConfig(picard_depth=0)
    with pytest.raises(SpectralError, match="multiple"):
        SolveConfig(t_max=1.0, dt=0.3).n_steps


def test_data_larger_than_epsilon_rejected(data):
    with pytest.raises(SpectralError, match="above epsilon"):
        evolve(data, SolveConfig(epsilon=0.01, t_max=0.1))


# ---------------------------------------------------------------- right-hand side


def test_rhs_of_zero_is_zero():
    z = SpinorField.zeros(SOLVER_GRID)
    a, b = rhs_projected(z, z)
    assert a.l2() == 0.0 and b.l2() == 0.0


def test_rhs_outputs_in_range(data):
    plus, minus = rhs_projected(*data)
    assert (apply_projection(plus, 1) - plus).l2() <= 1e-12 * plus.l2()
    assert (apply_projection(minus, -1) - minus).l2() <= 1e-12 * minus.l2()


def test_rhs_rejects_unprojected_branch():
    g = GridSpec(n_points=32)
    psi = random_spinor(g, rng(1))
    with pytest.raises(SpectralError, match="range"):
        rhs_projected(psi, psi * 0.0)


def test_density_four_term_expansion(data):
    plus, minus = data
    psi = (plus + minus).values
    # oracle: sum over both branch pairs of <psi_s1, beta psi_s2>
    parts = (plus.values, minus.values)
    four = sum(np.einsum("aij,ab,bij->ij", p.conj(), BETA, q) for p in parts for q in parts)
    assert np.abs(beta_density(psi) - four).max() <= 1e-12 * np.abs(four).max()


# ---------------------------------------------------------------- charge


def test_charge_of_zero_and_branch_splitting(data):
    assert charge(SpinorField.zeros(SOLVER_GRID)) == 0.0
    plus, minus = data
    total = charge(plus + minus)
    assert total == pytest.approx(charge(plus) + charge(minus), rel=1e-12)


def test_charge_conserved_along_evolution(data):
    traj = evolve(data, SolveConfig(t_max=1.0, dt=1e-2))
    q = charge_series(traj)
    assert np.abs(q / q[0] - 1).max() <= 1e-6


# ---------------------------------------------------------------- Picard


def test_picard_zero_data():
    z = SpinorField.zeros(SOLVER_GRID)
    traj, diffs = picard_iterate(z, SolveConfig(t_max=0.1))
    assert diffs == [0.0]
    assert np.all(traj.values == 0)


def test_picard_contracts(data):
    _, diffs = picard_iterate(data, SolveConfig(t_max=1.0, dt=1e-2))
    factors = contraction_factors(diffs)
    assert len(diffs) >= 2 and diffs[-1] < 1e-12
    assert all(f < 0.5 for f in factors)


def test_picard_reports_divergence():
    g = SOLVER_GRID
    with pytest.raises(ContractionError):
        picard_iterate(make_data(g, 5.0), SolveConfig(epsilon=5.0, t_max=1.0))


def test_first_iterate_is_cubic():
    # oracle: log-log regression of the first Picard difference on epsilon
    eps = [0.02, 0.04, 0.08]
    first = []
    for e in eps:
        _, diffs = picard_iterate(make_data(SOLVER_GRID, e), SolveConfig(epsilon=e, t_max=0.5, dt=1e-2, picard_depth=1))
        first.append(diffs[0])
    slope = np.polyfit(np.log(eps), np.log(first), 1)[0]
    assert slope == pytest.approx(3.0, abs=0.3)


# ---------------------------------------------------------------- Strang


def test_evolve_without_nonlinearity_is_free(data):
    cfg = SolveConfig(t_max=1.0, dt=0.05, nonlinear=False)
    traj = evolve(data, cfg)
    free = free_evolution(data, traj.times)
    assert l2_sup(traj.values, free.values, SOLVER_GRID) <= 1e-10
    tiny = make_data(SOLVER_GRID, 1e-7)
    small = evolve(tiny, SolveConfig(epsilon=1e-7, t_max=1.0, dt=0.05))
    assert l2_sup(small.values, free_evolution(tiny, small.times).values, SOLVER_GRID) <= 1e-10


def test_strang_second_order(data):
    def end(dt):
        return evolve(data, SolveConfig(t_max=1.0, dt=dt)).values[-1]

    ref = end(1e-3)
    e1 = np.linalg.norm(end(0.05) - ref)
    e2 = np.linalg.norm(end(0.025) - ref)
    assert e1 / e2 == pytest.approx(4.0, rel=0.3)


def test_time_reversal(data):
    cfg = SolveConfig(t_max=0.5, dt=1e-3)
    fwd = evolve(data, cfg)
    end = SpinorField(fwd.values[-1], SOLVER_GRID)
    # the H^(1/2) norm is not conserved, so the backward run gets some headroom
    back = evolve(end, SolveConfig(epsilon=0.06, t_max=0.5, dt=1e-3), direction=-1)
    assert back.times[0] == pytest.approx(-0.5) and back.times[-1] == 0.0
    start = (data[0] + data[1]).values
    assert l2_sup(back.values[0], start, SOLVER_GRID) <= 1e-8 * math.sqrt(charge(data[0] + data[1]))


def test_branches_stay_in_range(data):
    traj = evolve(data, SolveConfig(t_max=1.0, dt=1e-2, save_every=20))
    for i in range(len(traj.times)):
        plus, minus = branches(traj, i)
        assert projection_defect(plus.to_physical(), 1) <= 1e-9
        assert projection_defect(minus.to_physical(), -1) <= 1e-9


def test_evolve_agrees_with_picard(data):
    dt, eps = 1e-2, 0.05
    a = solve(data, SolveConfig(t_max=1.0, dt=dt))
    b = solve(data, SolveConfig(t_max=1.0, dt=dt, integrator="duhamel_picard"))
    assert l2_sup(a.values, b.values, SOLVER_GRID) <= 10 * (dt ** 2 + eps ** 5)


# ---------------------------------------------------------------- scattering and output


def test_free_profiles_constant(data):
    traj = evolve(data, SolveConfig(t_max=1.0, dt=0.05, nonlinear=False))
    for s in (1, -1):
        _, inc = scattering_profile(traj, s)
        assert max(inc) <= 1e-12
    assert total_variation(traj) <= 1e-11
    with pytest.raises(SpectralError):
        scattering_profile(traj, 0)


def test_nonlinear_increments_small(data):
    traj = evolve(data, SolveConfig(t_max=2.0, dt=1e-2, save_every=10))
    tv = total_variation(traj)
    assert 0 < tv <= 0.05 ** 3 * 100


def test_checkpoint_round_trip(tmp_path, data):
    traj = evolve(data, SolveConfig(t_max=0.2, dt=0.05))
    path = tmp_path / "traj.bin"
    write_checkpoint(traj, path)
    back = read_checkpoint(path)
    assert np.array_equal(back.values, traj.values)
    assert np.array_equal(back.times, traj.times)
    assert back.grid == traj.grid
    buf = io.BytesIO()
    write_checkpoint(traj, buf)
    assert buf.getvalue() == path.read_bytes()


def test_summary_csv(data):
    traj = evolve(data, SolveConfig(t_max=0.2, dt=0.05))
    text = summary_csv(traj)
    lines = text.split("\r\n")
    assert lines[0] == "time,charge,h_half_norm,increment"
    assert len([x for x in lines if x]) == len(traj.times) + 1
    assert float(lines[1].split(",")[1]) == pytest.approx(charge(data[0] + data[1]), rel=1e-12)
