"""Periodic-grid spectral backbone.

Fields live on the torus [-L, L)^2 sampled on an n x n grid. The frequency
lattice consists of integer multiples of pi/L; transforms use the
unnormalized numpy convention so that ``fft2(values)`` is the frequency
representation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

PHYSICAL = "physical"
FREQUENCY = "frequency"


class SpectralError(ValueError):
    """Raised when a spectral operation receives invalid input."""


@dataclass(frozen=True)
class GridSpec:
    """Sampling and horizon parameters of a periodic 2D experiment.

    Parameters
    ----------
    n_points : int
        Samples per dimension, a power of two and at least 8.
    half_width : float
        L, the box is [-L, L)^2.
    dt : float
        Time step.
    t_max : float
        Horizon T.
    r_param : int, optional
        Frame-set discretization exponent, defaults to ceil(log2 T) + 1.
    seed : int
        Seed for reproducible randomness.
    """

    n_points: int = 128
    half_width: float = 16 * math.pi
    dt: float = 1e-3
    t_max: float = 8.0
    r_param: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        n = self.n_points
        if n < 8 or (n & (n - 1)) != 0:
            raise SpectralError(f"n_points must be a power of two >= 8, got {n}")
        if not self.half_width > 0:
            raise SpectralError("half_width must be positive")
        if not self.dt > 0 or not self.t_max > 0:
            raise SpectralError("dt and t_max must be positive")
        if self.r_param is None:
            object.__setattr__(self, "r_param", default_r_param(self.t_max))
        if self.t_max > 2.0 ** self.r_param:
            raise SpectralError(
                f"t_max={self.t_max} exceeds 2^r_param={2.0 ** self.r_param}"
            )

    @property
    def dx(self) -> float:
        return 2 * self.half_width / self.n_points

    @property
    def area(self) -> float:
        return (2 * self.half_width) ** 2

    @property
    def nyquist(self) -> float:
        """Largest representable frequency magnitude per axis."""
        return math.pi * self.n_points / (2 * self.half_width)

    @property
    def dealias_radius(self) -> float:
        return self.nyquist * 2.0 / 3.0

    @property
    def k_max(self) -> int:
        """Largest dyadic level with 2^k inside the dealiasing margin."""
        return int(math.floor(math.log2(self.dealias_radius)))

    @property
    def k_min(self) -> int:
        """Smallest dyadic level whose annulus reaches the first lattice shell."""
        return int(math.ceil(math.log2(math.pi / self.half_width))) - 1

    def coords(self) -> np.ndarray:
        return -self.half_width + self.dx * np.arange(self.n_points)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.coords()
        return np.meshgrid(x, x, indexing="ij")

    def frequencies(self) -> np.ndarray:
        """One-dimensional frequency lattice in fft ordering."""
        return 2 * math.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    def freq_mesh(self) -> tuple[np.ndarray, np.ndarray]:
        k = self.frequencies()
        return np.meshgrid(k, k, indexing="ij")

    def nyquist_mask(self) -> np.ndarray:
        """Boolean mask, False on the Nyquist row and column."""
        m = np.ones((self.n_points, self.n_points), dtype=bool)
        h = self.n_points // 2
        m[h, :] = False
        m[:, h] = False
        return m

    def check_level(self, k: int) -> None:
        if k > self.k_max:
            raise SpectralError(
                f"dyadic level {k} exceeds resolvable maximum {self.k_max} "
                f"(2^k must stay below {self.dealias_radius:.4g})"
            )
        if k < self.k_min:
            raise SpectralError(
                f"dyadic level {k} below resolvable minimum {self.k_min}"
            )


def default_r_param(t_max: float) -> int:
    return int(math.ceil(math.log2(t_max))) + 1


@dataclass(frozen=True)
class ScalarField:
    """Complex samples on a periodic grid in a given representation."""

    values: np.ndarray
    grid: GridSpec
    representation: str = PHYSICAL

    def __post_init__(self):
        if self.representation not in (PHYSICAL, FREQUENCY):
            raise SpectralError(f"unknown representation {self.representation!r}")
        v = np.asarray(self.values, dtype=complex)
        n = self.grid.n_points
        if v.shape[-2:] != (n, n):
            raise SpectralError(f"values shape {v.shape} does not match grid {n}x{n}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def to_frequency(self) -> "ScalarField":
        if self.representation == FREQUENCY:
            return self
        return ScalarField(np.fft.fft2(self.values), self.grid, FREQUENCY)

    def to_physical(self) -> "ScalarField":
        if self.representation == PHYSICAL:
            return self
        return ScalarField(np.fft.ifft2(self.values), self.grid, PHYSICAL)

    def with_values(self, values) -> "ScalarField":
        return replace(self, values=values)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        other = _match(other, self.representation)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        other = _match(other, self.representation)
        return self.with_values(self.values - other.values)

    def __mul__(self, c) -> "ScalarField":
        return self.with_values(self.values * c)

    __rmul__ = __mul__


def _match(f: ScalarField, representation: str) -> ScalarField:
    return f.to_frequency() if representation == FREQUENCY else f.to_physical()


@dataclass(frozen=True)
class BracketSymbol:
    """Symbol sqrt(M^2 + |xi|^2), or sqrt(2^{-2k} + |xi|^2) if a dyadic scale is set."""

    mass: float = 1.0
    dyadic_scale: Optional[int] = None

    def __post_init__(self):
        if not self.mass > 0:
            raise SpectralError("mass must be positive")

    def offset(self) -> float:
        if self.dyadic_scale is not None:
            return 2.0 ** (-2 * self.dyadic_scale)
        return self.mass ** 2

    def __call__(self, xi1, xi2):
        return np.sqrt(self.offset() + np.asarray(xi1) ** 2 + np.asarray(xi2) ** 2)


def bracket(xi, symbol: BracketSymbol = BracketSymbol()):
    """Evaluate the bracket at one point or an array of points (last axis = 2)."""
    xi = np.asarray(xi, dtype=float)
    out = symbol(xi[..., 0], xi[..., 1])
    return float(out) if out.ndim == 0 else out


def symbol_on_lattice(grid: GridSpec, symbol: Callable) -> np.ndarray:
    k1, k2 = grid.freq_mesh()
    return np.broadcast_to(np.asarray(symbol(k1, k2)), k1.shape)


def apply_multiplier(f: ScalarField, symbol) -> ScalarField:
    """Multiply the Fourier coefficients of ``f`` by a symbol.

    ``symbol`` is either a callable of (xi1, xi2) or a precomputed lattice
    array. Nyquist modes are zeroed. The output keeps the input's
    representation.
    """
    grid = f.grid
    s = symbol if isinstance(symbol, np.ndarray) else symbol_on_lattice(grid, symbol)
    s = np.asarray(s)
    bad = ~np.isfinite(s)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        xi = grid.frequencies()
        raise SpectralError(
            f"symbol is not finite at lattice point xi=({xi[i]:.6g}, {xi[j]:.6g})"
        )
    fh = f.to_frequency().values
    out = ScalarField(fh * s * grid.nyquist_mask(), grid, FREQUENCY)
    return out if f.representation == FREQUENCY else out.to_physical()


def propagator_symbol(grid: GridSpec, t: float, sign: int, mass: float = 1.0):
    br = symbol_on_lattice(grid, BracketSymbol(mass))
    return np.exp(1j * sign * t * br)


def half_wave_propagate(f: ScalarField, t: float, sign: int = 1) -> ScalarField:
    """Apply exp(+- i t <D>)."""
    _check_sign(sign)
    return apply_multiplier(f, propagator_symbol(f.grid, t, sign))


def kg_solve(u0: ScalarField, u1: ScalarField, t: float) -> ScalarField:
    """Solution at time t of u_tt - Lap u + u = 0 with data (u0, u1)."""
    br = symbol_on_lattice(u0.grid, BracketSymbol())
    cos_part = np.cos(t * br)
    sin_part = np.sin(t * br) / br
    a = apply_multiplier(u0, cos_part)
    b = apply_multiplier(u1, sin_part)
    out = a.to_frequency() + b.to_frequency()
    return out if u0.representation == FREQUENCY else out.to_physical()


def lebesgue_norm(f: ScalarField, q: float = 2.0) -> float:
    """Riemann-sum L^q norm over the box; q = inf gives the max modulus."""
    if f.representation != PHYSICAL:
        raise SpectralError("lebesgue_norm needs the physical representation")
    a = np.abs(f.values)
    if math.isinf(q):
        return float(a.max())
    if q < 1:
        raise SpectralError("q must lie in [1, inf]")
    return float((f.grid.dx ** 2 * np.sum(a ** q)) ** (1.0 / q))


def l2_from_frequency(f: ScalarField) -> float:
    """L^2 norm computed on the frequency side (Parseval)."""
    fh = f.to_frequency().values
    n2 = f.grid.n_points ** 2
    return float(math.sqrt(f.grid.dx ** 2 / n2 * np.sum(np.abs(fh) ** 2)))


def random_field(grid: GridSpec, rng: np.random.Generator, band: Optional[float] = None) -> ScalarField:
    """Complex Gaussian field, band-limited to |xi| <= band (default: dealias radius)."""
    n = grid.n_points
    coeffs = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    k1, k2 = grid.freq_mesh()
    radius = grid.dealias_radius if band is None else band
    coeffs = coeffs * (np.hypot(k1, k2) <= radius) * grid.nyquist_mask()
    return ScalarField(coeffs, grid, FREQUENCY).to_physical()


def edge_charge_fraction(values: np.ndarray, grid: GridSpec, margin: float = 0.05) -> float:
    """Fraction of sum |values|^2 located within ``margin`` of the box edge."""
    x = grid.coords()
    near = np.abs(x) >= (1 - margin) * grid.half_width
    band = near[:, None] | near[None, :]
    dens = np.sum(np.abs(np.asarray(values)) ** 2, axis=tuple(range(np.ndim(values) - 2)))
    total = dens.sum()
    return float(dens[band].sum() / total) if total > 0 else 0.0


def warn_if_wrapping(values: np.ndarray, grid: GridSpec, threshold: float = 1e-6) -> float:
    frac = edge_charge_fraction(values, grid)
    if frac > threshold:
        warnings.warn(
            f"{frac:.3g} of the charge sits within 5% of the box edge; "
            "periodic wrap-around may contaminate results",
            RuntimeWarning,
            stacklevel=2,
        )
    return frac


def _check_sign(sign: int) -> None:
    if sign not in (1, -1):
        raise SpectralError(f"sign must be +1 or -1, got {sign}")


@dataclass(frozen=True)
class Trajectory:
    """Uniformly time-sampled fields.

    ``values`` has shape (n_times, n, n) for scalar fields or
    (n_times, 2, n, n) for spinors, always in the physical representation.
    """

    times: np.ndarray
    values: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if t.ndim != 1 or len(t) < 2:
            raise SpectralError("a trajectory needs at least two times")
        if v.shape[0] != len(t):
            raise SpectralError("times and values disagree in length")
        steps = np.diff(t)
        if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * max(1.0, abs(steps[0])):
            raise SpectralError("trajectory times must be increasing with a uniform step")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def window(self) -> float:
        """Length of the sampled time window (n_times * dt)."""
        return self.dt * len(self.times)

    @property
    def is_spinor(self) -> bool:
        return self.values.ndim == 4

    def with_values(self, values) -> "Trajectory":
        return Trajectory(self.times, values, self.grid)


def free_trajectory(f: ScalarField, times, sign: int = 1) -> Trajectory:
    """Samples of exp(+- i t <D>) f at the given times."""
    _check_sign(sign)
    times = np.asarray(times, dtype=float)
    fh = f.to_frequency().values * f.grid.nyquist_mask()
    br = symbol_on_lattice(f.grid, BracketSymbol())
    phase = np.exp(1j * sign * times[:, None, None] * br[None])
    return Trajectory(times, np.fft.ifft2(phase * fh[None]), f.grid)
