import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dirac_lab.spectral import (
    FREQUENCY,
    PHYSICAL,
    BracketSymbol,
    GridSpec,
    ScalarField,
    SpectralError,
    apply_multiplier,
    bracket,
    edge_charge_fraction,
    free_trajectory,
    half_wave_propagate,
    kg_solve,
    l2_from_frequency,
    lebesgue_norm,
    random_field,
    warn_if_wrapping,
)


def rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


# ---------------------------------------------------------------- grid and bracket


def test_bracket_values():
    assert bracket((0, 0)) == 1.0
    assert bracket((3, 4)) == pytest.approx(math.sqrt(26), rel=1e-15)
    assert bracket((1, 0), BracketSymbol(dyadic_scale=0)) == pytest.approx(math.sqrt(2), rel=1e-15)


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(0.1, 10))
def test_bracket_dominates_mass_and_modulus(a, b, m):
    v = bracket((a, b), BracketSymbol(mass=m))
    assert v >= m * (1 - 1e-15)
    assert v >= math.hypot(a, b) * (1 - 1e-15)


def test_grid_rejects_bad_sizes():
    with pytest.raises(SpectralError):
        GridSpec(n_points=96)
    with pytest.raises(SpectralError):
        GridSpec(n_points=4)
    with pytest.raises(SpectralError):
        GridSpec(t_max=20.0, r_param=3)
    with pytest.raises(SpectralError):
        GridSpec(dt=0.0)


def test_default_r_param_covers_horizon():
    for t in (0.5, 1.0, 3.0, 8.0, 100.0):
        g = GridSpec(t_max=t)
        assert t <= 2.0 ** g.r_param


def test_level_range_checked():
    g = GridSpec(n_points=64, half_width=math.pi)
    g.check_level(g.k_max)
    with pytest.raises(SpectralError):
        g.check_level(g.k_max + 1)
    with pytest.raises(SpectralError):
        g.check_level(g.k_min - 1)
    assert 2.0 ** g.k_max <= g.dealias_radius


# ---------------------------------------------------------------- transforms


def test_round_trip_many_fields():
    g = GridSpec(n_points=32)
    r = rng(1)
    worst = 0.0
    for _ in range(1000):
        v = r.standard_normal((32, 32)) + 1j * r.standard_normal((32, 32))
        back = ScalarField(v, g).to_frequency().to_physical().values
        worst = max(worst, rel(back, v))
    assert worst <= 1e-12


@pytest.mark.parametrize("n", [64, 128, 256])
def test_parseval(n):
    g = GridSpec(n_points=n)
    f = random_field(g, rng(n))
    assert lebesgue_norm(f, 2) == pytest.approx(l2_from_frequency(f), rel=1e-12)


def test_lebesgue_constants():
    g = GridSpec(n_points=16, half_width=math.pi)
    one = ScalarField(np.ones((16, 16), complex), g)
    assert lebesgue_norm(one, math.inf) == 1.0
    assert lebesgue_norm(one, 2) == pytest.approx(2 * math.pi, rel=1e-14)
    with pytest.raises(SpectralError):
        lebesgue_norm(one.to_frequency(), 2)
    with pytest.raises(SpectralError):
        lebesgue_norm(one, 0.5)


# ---------------------------------------------------------------- multipliers


def test_identity_and_zero_multipliers():
    g = GridSpec(n_points=64)
    f = random_field(g, rng(2))
    same = apply_multiplier(f, lambda a, b: np.ones_like(a))
    assert same.representation == PHYSICAL
    assert rel(same.values, f.values) <= 1e-12
    zero = apply_multiplier(f.to_frequency(), lambda a, b: np.zeros_like(a))
    assert zero.representation == FREQUENCY
    assert np.all(zero.values == 0)


def test_multiplier_composition():
    g = GridSpec(n_points=64)
    f = random_field(g, rng(3))
    br = BracketSymbol()
    twice = apply_multiplier(apply_multiplier(f, br), br)
    # oracle: square the symbol by hand on the lattice
    k1, k2 = g.freq_mesh()
    once = apply_multiplier(f, 1 + k1 ** 2 + k2 ** 2)
    assert rel(twice.values, once.values) <= 1e-12


def test_multiplier_rejects_non_finite():
    g = GridSpec(n_points=16)
    f = random_field(g, rng(4))
    with pytest.raises(SpectralError, match="lattice point"), np.errstate(divide="ignore"):
        apply_multiplier(f, lambda a, b: 1.0 / (a ** 2 + b ** 2))


@settings(max_examples=25, deadline=None)
@given(st.complex_numbers(max_magnitude=10, allow_nan=False), st.complex_numbers(max_magnitude=10, allow_nan=False), st.integers(0, 2 ** 32))
def test_multiplier_linear(a, b, seed):
    g = GridSpec(n_points=16)
    r = rng(seed)
    f, h = random_field(g, r), random_field(g, r)
    sym = BracketSymbol()
    lhs = apply_multiplier(f * a + h * b, sym).values
    rhs = (apply_multiplier(f, sym) * a + apply_multiplier(h, sym) * b).values
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * (1 + abs(a) + abs(b)) * np.linalg.norm(f.values + h.values) + 1e-12


# ---------------------------------------------------------------- propagators


def test_propagator_at_zero_time():
    g = GridSpec(n_points=64)
    f = random_field(g, rng(5))
    assert rel(half_wave_propagate(f, 0.0).values, f.values) <= 1e-12


@pytest.mark.parametrize("n", [64, 128, 256])
def test_propagator_unitary_and_group_law(n):
    g = GridSpec(n_points=n)
    f = random_field(g, rng(n + 1))
    norm = lebesgue_norm(f, 2)
    for t in (0.1, 1.0, 10.0):
        for s in (1, -1):
            assert lebesgue_norm(half_wave_propagate(f, t, s), 2) == pytest.approx(norm, rel=1e-12)
    # oracle: one multiplier exp(i (s + t) <xi>) evaluated directly
    k1, k2 = g.freq_mesh()
    direct = apply_multiplier(f, np.exp(1j * 1.7 * np.sqrt(1 + k1 ** 2 + k2 ** 2)))
    composed = half_wave_propagate(half_wave_propagate(f, 0.5), 1.2)
    assert rel(composed.values, direct.values) <= 1e-12


def test_propagator_rejects_bad_sign():
    g = GridSpec(n_points=16)
    with pytest.raises(SpectralError):
        half_wave_propagate(random_field(g, rng()), 1.0, sign=0)


def test_free_trajectory_matches_propagator():
    g = GridSpec(n_points=32)
    f = random_field(g, rng(6))
    traj = free_trajectory(f, [0.0, 0.5, 1.0], sign=-1)
    assert rel(traj.values[2], half_wave_propagate(f, 1.0, -1).values) <= 1e-12


# ---------------------------------------------------------------- Klein-Gordon


def test_kg_trivial_cases():
    g = GridSpec(n_points=32)
    u0, u1 = random_field(g, rng(7)), random_field(g, rng(8))
    assert rel(kg_solve(u0, u1, 0.0).values, u0.values) <= 1e-12
    z = ScalarField(np.zeros((32, 32), complex), g)
    assert np.all(kg_solve(z, z, 3.0).values == 0)


def _kg_residual(u0, u1, t, h):
    g = u0.grid
    k1, k2 = g.freq_mesh()
    laplacian = -(k1 ** 2 + k2 ** 2) + 0j
    u = kg_solve(u0, u1, t)
    second = (kg_solve(u0, u1, t + h).values - 2 * u.values + kg_solve(u0, u1, t - h).values) / h ** 2
    res = second - apply_multiplier(u, laplacian).values + u.values
    return np.sqrt(g.dx ** 2 * np.sum(np.abs(res) ** 2))


def test_kg_finite_difference_order():
    g = GridSpec(n_points=64)
    r = rng(9)
    u0, u1 = random_field(g, r, band=2.0), random_field(g, r, band=2.0)
    hs = np.array([1e-2, 5e-3, 2.5e-3])
    res = np.array([_kg_residual(u0, u1, 0.7, h) for h in hs])
    order = np.polyfit(np.log(hs), np.log(res), 1)[0]
    assert order >= 1.9


# ---------------------------------------------------------------- wrap monitor


def test_edge_fraction_and_warning():
    g = GridSpec(n_points=64, half_width=10.0)
    x1, x2 = g.mesh()
    centred = np.exp(-(x1 ** 2 + x2 ** 2))
    assert edge_charge_fraction(centred, g) < 1e-30
    edge = np.exp(-((x1 - 9.8) ** 2 + x2 ** 2))
    with pytest.warns(RuntimeWarning, match="wrap-around"):
        assert warn_if_wrapping(edge, g) > 0.1
