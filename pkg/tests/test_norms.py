import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dirac_lab.decomp import Frame, build_frame_set, lp_project
from dirac_lab.kernels import energy_ratio_oracle
from dirac_lab.norms import (
    FRAME_KINDS,
    FreeSpinor,
    HarnessScale,
    RatioReport,
    bilinear_ratio,
    dyadic_sweep,
    frame_mixed_norm,
    mixed_norm,
    profile_distances,
    sobolev_norm,
    spacetime_l2,
    strichartz_ratio,
    sum_frame_norm_upper,
    trilinear_ratio,
    v2_lower_bound,
    v2_search,
    windowed_l2,
    xbq_norm,
)
from dirac_lab.norms import _pair_density
from dirac_lab.spectral import (
    GridSpec,
    ScalarField,
    SpectralError,
    Trajectory,
    free_trajectory,
    lebesgue_norm,
    random_field,
)
from dirac_lab.spinor import random_spinor

SMALL = HarnessScale(n_points=64, box=6.0, window=2.0)


def rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))


def packet(grid, centre=(0.0, 0.0), freq=(1.5, 0.0), width=1.0):
    X1, X2 = grid.mesh()
    r2 = (X1 - centre[0]) ** 2 + (X2 - centre[1]) ** 2
    return ScalarField(np.exp(-r2 / (2 * width ** 2)) * np.exp(1j * (freq[0] * X1 + freq[1] * X2)), grid)


# ---------------------------------------------------------------- Lebesgue and Sobolev


def test_mixed_norm_constant_in_time_and_fubini():
    g = GridSpec(n_points=32)
    f = random_field(g, rng(1))
    still = Trajectory(np.arange(5) * 0.1, np.stack([f.values] * 5), g)
    assert mixed_norm(still, math.inf, 2) == pytest.approx(lebesgue_norm(f, 2), rel=1e-14)
    moving = free_trajectory(f, np.arange(7) * 0.3)
    assert mixed_norm(moving, 2, 2) == pytest.approx(spacetime_l2(moving), rel=1e-13)
    with pytest.raises(SpectralError):
        mixed_norm(moving, 0.5, 2)


@settings(max_examples=30, deadline=None)
@given(st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3, allow_nan=False, allow_infinity=False), st.sampled_from([1.0, 2.0, 4.0, math.inf]), st.sampled_from([1.0, 2.0, math.inf]))
def test_norm_homogeneity(c, p, q):
    g = GridSpec(n_points=16)
    traj = free_trajectory(random_field(g, rng(2)), np.arange(4) * 0.5)
    scaled = traj.with_values(traj.values * c)
    assert mixed_norm(scaled, p, q) == pytest.approx(abs(c) * mixed_norm(traj, p, q), rel=1e-13)
    f = random_spinor(g, rng(3))
    assert sobolev_norm(f * c, 0.5) == pytest.approx(abs(c) * sobolev_norm(f, 0.5), rel=1e-13)


def test_sobolev_zero_order_is_l2():
    g = GridSpec(n_points=64)
    f = random_field(g, rng(4))
    assert sobolev_norm(f, 0.0) == pytest.approx(lebesgue_norm(f, 2), rel=1e-12)


@pytest.mark.parametrize("sigma", [0.5, 1.0, -0.5])
def test_sobolev_on_an_annulus(sigma):
    g = GridSpec(n_points=128, half_width=4.0)
    for k in (2, 3, 4):
        f = lp_project(random_field(g, rng(k)), k)
        ratio = sobolev_norm(f, sigma) / (2.0 ** (k * sigma) * lebesgue_norm(f, 2))
        lo, hi = sorted((2.0 ** -sigma, 2.0 ** sigma))
        assert lo * 0.9 <= ratio <= hi * 1.1


def test_sobolev_frequency_doubling():
    g = GridSpec(n_points=128, half_width=2 * math.pi)
    r = rng(5)
    n = g.n_points
    base = np.zeros((n, n), complex)
    double = np.zeros((n, n), complex)
    # same coefficients on integer frequencies 8 <= |m| <= 16 and on 2m
    for m1 in range(-16, 17):
        for m2 in range(-16, 17):
            if 8 <= math.hypot(m1, m2) <= 16:
                c = r.standard_normal() + 1j * r.standard_normal()
                base[m1 % n, m2 % n] = c
                double[(2 * m1) % n, (2 * m2) % n] = c
    f = ScalarField(base, g, "frequency")
    h = ScalarField(double, g, "frequency")
    for sigma in (0.5, 1.0):
        assert sobolev_norm(h, sigma) / sobolev_norm(f, sigma) == pytest.approx(2.0 ** sigma, rel=0.05)


# ---------------------------------------------------------------- X^{b,q}


@pytest.fixture(scope="module")
def free_wave():
    g = GridSpec(n_points=64, half_width=8.0)
    f = lp_project(random_field(g, rng(6)), 2)
    return free_trajectory(f, np.arange(256) * 0.05, 1)


def test_xbq_zero_b_is_windowed_l2(free_wave):
    assert xbq_norm(free_wave, 1, 0.0, 2.0) == pytest.approx(windowed_l2(free_wave), rel=0.05)


def test_xbq_free_wave_sits_at_lowest_level(free_wave):
    top = xbq_norm(free_wave, 1, 0.5, math.inf)
    # oracle: all mass at the lowest level, weighted by 2^(lo/2)
    from dirac_lab.decomp import modulation_range

    lo, _ = modulation_range(free_wave)
    assert top == pytest.approx(2.0 ** (lo / 2) * windowed_l2(free_wave), rel=0.05)


def test_xbq_single_modulation(free_wave):
    m0 = 4
    shift = np.exp(1j * 2.0 ** m0 * free_wave.times)[:, None, None]
    modulated = free_wave.with_values(free_wave.values * shift)
    for b in (0.5, 1.0):
        got = xbq_norm(modulated, 1, b, 2.0)
        assert got == pytest.approx(2.0 ** (b * m0) * windowed_l2(modulated), rel=0.2)


# ---------------------------------------------------------------- V^2


def _dp_best(dist, n):
    """Exact maximum of the sum of squared steps over increasing sequences of at most n points."""
    t = dist.shape[0]
    best = np.full((t, n + 1), -np.inf)
    best[:, 1] = 0.0
    for c in range(2, n + 1):
        for j in range(t):
            for i in range(j):
                best[j, c] = max(best[j, c], best[i, c - 1] + dist[i, j] ** 2)
    return math.sqrt(best[:, 1:].max())


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_v2_search_matches_exact_optimum(seed):
    pts = rng(seed).standard_normal((9, 3))
    dist = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    for n in (2, 3, 5):
        got, seq = v2_search(dist, n, proposals=2000, seed=seed)
        exact = _dp_best(dist, n)
        assert got <= exact + 1e-12
        assert got >= 0.97 * exact
        assert len(seq) <= n and seq == sorted(seq)


def test_v2_own_sign_and_opposite_sign(free_wave):
    sup = mixed_norm(free_wave, math.inf, 2)
    _, dist = profile_distances(free_wave, 1)
    assert dist.max() <= 1e-12 * sup
    assert v2_lower_bound(free_wave, 1, 4) == pytest.approx(sup, rel=1e-12)
    assert v2_lower_bound(free_wave, -1, 4) > 1.01 * sup
    values = [v2_lower_bound(free_wave, -1, n, max_times=64) for n in (2, 3, 5, 8)]
    assert all(a <= b for a, b in zip(values, values[1:]))
    with pytest.raises(SpectralError):
        v2_lower_bound(free_wave, 1, 1)


# ---------------------------------------------------------------- frame norms


def _rotated_trajectory(grid, f, times, omega):
    """The field at R y for lattice points y, R mapping e1 to omega, by exact Fourier synthesis."""
    fh = np.fft.fft2(f.values) * grid.nyquist_mask()
    k = grid.frequencies()
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    br = np.sqrt(1 + K1 ** 2 + K2 ** 2)
    rot = np.array([[omega[0], -omega[1]], [omega[1], omega[0]]])
    Y1, Y2 = grid.mesh()
    pts = np.stack([Y1, Y2], -1) @ rot.T + grid.half_width
    keep = np.abs(fh).ravel() > 1e-13 * np.abs(fh).max()
    modes = np.exp(1j * (pts[..., 0, None] * K1.ravel()[keep] + pts[..., 1, None] * K2.ravel()[keep])) / grid.n_points ** 2
    vals = np.stack([modes @ (fh * np.exp(1j * t * br)).ravel()[keep] for t in times])
    return Trajectory(times, vals, grid)


@pytest.fixture(scope="module")
def rotation_case():
    g = GridSpec(n_points=128, half_width=4 * math.pi, dt=0.1, t_max=3.2)
    f = packet(g, centre=(1.0, -0.5), freq=(1.5, 0.5))
    times = 0.1 * np.arange(32)
    omega = (math.cos(0.6), math.sin(0.6))
    return free_trajectory(f, times, 1), _rotated_trajectory(g, f, times, omega), omega


@pytest.mark.parametrize("kind", FRAME_KINDS)
def test_frame_norm_rotation_oracle(rotation_case, kind):
    traj, rotated, omega = rotation_case
    a = frame_mixed_norm(traj, Frame(0.0, omega), kind)
    b = frame_mixed_norm(rotated, Frame(0.0, (1.0, 0.0)), kind)
    assert a == pytest.approx(b, rel=0.05)


@pytest.mark.parametrize("omega,tol", [((-1.0, 0.0), 0.01), ((0.0, 1.0), 0.05)])
def test_unit_speed_slices_match_jacobian(omega, tol):
    g = GridSpec(n_points=128, half_width=4 * math.pi, dt=0.1)
    f = packet(g)
    traj = free_trajectory(f, 0.1 * np.arange(-40, 41), 1)
    fr = Frame(1.0, omega)
    got = frame_mixed_norm(traj, fr, "Linft_L2x") / lebesgue_norm(f, 2)
    assert got == pytest.approx(energy_ratio_oracle(f, fr), rel=tol)


def test_frame_norm_zero_and_errors():
    g = GridSpec(n_points=32, dt=0.5)
    zero = Trajectory(np.arange(8) * 0.5, np.zeros((8, 32, 32)), g)
    for kind in FRAME_KINDS:
        assert frame_mixed_norm(zero, Frame(0.3, (0.6, 0.8)), kind) == 0.0
    with pytest.raises(SpectralError, match="unknown frame norm kind"):
        frame_mixed_norm(zero, Frame(0.3, (1.0, 0.0)), "L3t")
    with pytest.raises(SpectralError, match="degenerate slab"):
        frame_mixed_norm(zero, Frame(0.0, (1.0, 0.0)), "L2t_Linfx", slab=0.1 * g.dx)


def test_sum_frame_bounds(rotation_case):
    traj, _, omega = rotation_case
    one = build_frame_set("Omega", 2, omega, 4)
    assert len(one) == 1
    for kind in ("L2t_Linfx", "Linft_L2x"):
        assert sum_frame_norm_upper(traj, one, kind) == frame_mixed_norm(traj, one.members[0], kind)
    many = build_frame_set("Lambda", 0, omega, 1)
    assert len(many) == 3
    upper = sum_frame_norm_upper(traj, many, "L2t_Linfx")
    singles = [frame_mixed_norm(traj, fr, "L2t_Linfx") for fr in many.members]
    assert 0 < upper <= min(singles)
    assert upper <= singles[0] + sum(singles[1:])


# ---------------------------------------------------------------- ratio harnesses


def test_ratio_report_validation_and_csv():
    with pytest.raises(SpectralError, match="non-positive"):
        RatioReport([(0, 1.0, 0.0, math.inf)], 1.0, 1.0, {})
    a = RatioReport([(0, 1.0, 2.0, 0.5)], 0.5, 0.5, {"k": 1})
    b = RatioReport([(0, 1.0, 1.0, 0.9)], 0.9, 0.9, {"k": 2})
    c = RatioReport([(0, 3.0, 1.0, 3.0)], 3.0, 3.0, {"k": 3})
    assert dyadic_sweep([a, b]).stable
    assert not dyadic_sweep([a, b, c]).stable
    text = a.to_csv()
    assert text.startswith("seed,lhs,rhs_surrogate,ratio,config\r\n")
    assert "0.5" in text


def test_zero_partner_gives_zero_product():
    g = GridSpec(n_points=32)
    w1 = FreeSpinor(np.fft.fft2(random_spinor(g, rng(7)).values), g, 1)
    w2 = FreeSpinor(np.zeros((2, 32, 32), complex), g, 1)
    assert w2.norm == 0.0
    assert np.all(_pair_density(w1.at(0.3), w2.at(0.3)) == 0)


def test_harness_ratios_positive_and_finite():
    reports = [
        strichartz_ratio(3, n_seeds=1, scale=SMALL),
        bilinear_ratio(2, 3, n_seeds=1, scale=SMALL),
        trilinear_ratio(2, 2, 3, n_seeds=1, scale=SMALL),
        trilinear_ratio(2, 3, 3, p=2.0, mode="TRI2", n_seeds=1, scale=SMALL),
    ]
    for rep in reports:
        assert all(0 < t[3] < math.inf for t in rep.trials)
        assert rep.max_ratio >= rep.median_ratio


def test_harness_argument_checks():
    with pytest.raises(SpectralError):
        trilinear_ratio(2, 3, 4, p=1.2, scale=SMALL)
    with pytest.raises(SpectralError):
        trilinear_ratio(3, 2, 4, scale=SMALL)
    with pytest.raises(SpectralError):
        trilinear_ratio(2, 3, 4, p=1.5, mode="TRI2", scale=SMALL)
    with pytest.raises(SpectralError):
        trilinear_ratio(2, 3, 4, mode="TRI3", scale=SMALL)
    with pytest.raises(SpectralError):
        bilinear_ratio(2, 3, signs=(1, 0), scale=SMALL)
    with pytest.raises(SpectralError):
        bilinear_ratio(2, 3, l=13, scale=SMALL)
    with pytest.raises(SpectralError, match="raise n_points"):
        strichartz_ratio(3, scale=HarnessScale(n_points=16))
