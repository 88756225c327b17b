"""Time integration of the cubic Dirac system split along the two branches.

With psi = psi_+ + psi_- and psi_pm = Pi_pm(D) psi, each branch obeys
(i d/dt +- <D>) psi_pm = -Pi_pm(D) N(psi) where N(psi) = <psi, beta psi> beta psi.
The projections commute with the linear flow, so both integrators work on
the full spinor and hand out the two branches on demand:

* ``picard_iterate`` runs the Duhamel fixed point in the interaction
  picture with trapezoidal time quadrature;
* ``evolve`` is a Strang splitting whose nonlinear substep is solved
  exactly (the density <psi, beta psi> is invariant under it, so the
  substep is a pointwise phase rotation).
"""

from __future__ import annotations

import csv
import io
import json
import math
import struct
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .decomp import smooth_step
from .spectral import FREQUENCY, PHYSICAL, GridSpec, SpectralError, Trajectory
from .spinor import (
    ALPHA1,
    ALPHA2,
    BETA,
    SpinorField,
    apply_projection,
    beta_density,
    dealias_mask,
    nonlinearity,
    projection_symbol,
)

BLOWUP_FACTOR = 1e3
PROJECTION_TOL = 1e-10
# the box used for solver experiments: 128^2 points over [-8 pi, 8 pi)^2
SOLVER_GRID = GridSpec(n_points=128, half_width=8 * math.pi)


class ContractionError(RuntimeError):
    """The Picard iteration stopped contracting."""


class BlowupError(RuntimeError):
    """A field norm left the small-data regime during time stepping."""


@dataclass(frozen=True)
class SolveConfig:
    """Parameters of one solve.

    ``dt`` is the step of the integrator (Strang) or of the Duhamel
    quadrature (Picard); ``save_every`` thins the stored trajectory.
    """

    epsilon: float = 0.05
    t_max: float = 4.0
    picard_depth: int = 8
    contraction_tol: float = 1e-13
    integrator: str = "strang_split"
    dt: float = 1e-2
    save_every: int = 1
    dealias: bool = True
    nonlinear: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise SpectralError(f"epsilon must be positive, got {self.epsilon}")
        if self.picard_depth < 1:
            raise SpectralError(f"picard_depth must be at least 1, got {self.picard_depth}")
        if self.integrator not in ("duhamel_picard", "strang_split"):
            raise SpectralError(f"unknown integrator {self.integrator!r}")
        if not self.dt > 0 or not self.t_max > 0:
            raise SpectralError("dt and t_max must be positive")
        if self.save_every < 1:
            raise SpectralError("save_every must be at least 1")

    @property
    def n_steps(self) -> int:
        n = self.t_max / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise SpectralError(f"t_max = {self.t_max} is not a multiple of dt = {self.dt}")
        return int(round(n))


# ---------------------------------------------------------------- norms and data


def _xi(grid: GridSpec) -> np.ndarray:
    k1, k2 = grid.freq_mesh()
    return np.stack([k1, k2], axis=-1)


def _bracket(grid: GridSpec) -> np.ndarray:
    k1, k2 = grid.freq_mesh()
    return np.sqrt(1 + k1 ** 2 + k2 ** 2)


def sobolev_half(psi: SpinorField) -> float:
    """H^{1/2} norm from the frequency side, weight <xi>."""
    fh = psi.to_frequency().values
    g = psi.grid
    w = _bracket(g)
    return float(math.sqrt(g.dx ** 2 / g.n_points ** 2 * np.sum(w * np.abs(fh) ** 2)))


def _sobolev_half_batch(fh: np.ndarray, grid: GridSpec) -> np.ndarray:
    """H^{1/2} norms of frequency arrays with leading time axis (nt, 2, n, n)."""
    w = _bracket(grid)
    return np.sqrt(grid.dx ** 2 / grid.n_points ** 2 * np.sum(w * np.abs(fh) ** 2, axis=(-3, -2, -1)))


def charge(psi: SpinorField) -> float:
    """Riemann sum of |psi|^2."""
    if psi.representation != PHYSICAL:
        raise SpectralError("charge needs the physical representation")
    return float(psi.grid.dx ** 2 * np.sum(np.abs(psi.values) ** 2))


def make_data(
    grid: GridSpec,
    epsilon: float,
    k: int = -1,
    seed: int = 0,
    branches: str = "both",
    width: float = 1.0,
    band: Optional[float] = None,
) -> tuple[SpinorField, SpinorField]:
    """Small localized random data (psi_+, psi_-) with ||psi||_{H^{1/2}} = epsilon.

    Complex Gaussian coefficients on the annulus 2^(k-1) <= |xi| <= 2^(k+1)
    are drawn on an integer index box that does not depend on the number
    of grid points, so refining the grid reproduces the same function. A
    Gaussian window of ``width`` localizes the field in space so that it
    disperses; a smooth cutoff then bounds the spectrum by ``band``
    (default: a third of the dealiasing radius, so cubic products stay
    alias free).
    """
    if branches not in ("both", "plus", "minus"):
        raise SpectralError(f"branches must be both, plus or minus, got {branches!r}")
    step = math.pi / grid.half_width
    m = int(math.ceil(2.0 ** (k + 1) / step))
    rng = np.random.Generator(np.random.Philox(seed))
    coef = rng.standard_normal((2, 2 * m + 1, 2 * m + 1)) + 1j * rng.standard_normal((2, 2 * m + 1, 2 * m + 1))
    idx = np.arange(-m, m + 1) * step
    r = np.hypot(idx[:, None], idx[None, :])
    coef *= (r >= 2.0 ** (k - 1)) & (r <= 2.0 ** (k + 1))
    n = grid.n_points
    if 2 * m + 1 > n:
        raise SpectralError(f"annulus 2^{k + 1} does not fit the lattice of {n} points")
    fh = np.zeros((2, n, n), dtype=complex)
    ii = np.arange(-m, m + 1) % n
    fh[:, ii[:, None], ii[None, :]] = coef
    # phase so that index 0 sits at x = -half_width
    k1, k2 = grid.freq_mesh()
    fh *= np.exp(-1j * grid.half_width * (k1 + k2))
    psi = SpinorField(fh, grid, FREQUENCY).to_physical()
    X1, X2 = grid.mesh()
    psi = psi.with_values(psi.values * np.exp(-(X1 ** 2 + X2 ** 2) / (2 * width ** 2)))
    band = grid.dealias_radius / 3 if band is None else band
    cut = smooth_step(np.hypot(k1, k2), 0.7 * band, band)
    psi = SpinorField(psi.to_frequency().values * cut * grid.nyquist_mask(), grid, FREQUENCY)
    plus = apply_projection(psi, 1)
    minus = apply_projection(psi, -1)
    if branches == "plus":
        minus = minus * 0.0
    elif branches == "minus":
        plus = plus * 0.0
    total = sobolev_half(plus + minus)
    if total == 0:
        raise SpectralError("empty annulus on this lattice")
    scale = epsilon / total
    return (plus * scale).to_physical(), (minus * scale).to_physical()


# ---------------------------------------------------------------- right-hand side


def projection_defect(psi: SpinorField, sign: int) -> float:
    """Relative L^2 distance of ``psi`` from the range of Pi_sign(D)."""
    nrm = psi.l2()
    if nrm == 0:
        return 0.0
    return (psi - apply_projection(psi, sign).to_physical() if psi.representation == PHYSICAL
            else psi - apply_projection(psi, sign)).l2() / nrm


def rhs_projected(psi_plus: SpinorField, psi_minus: SpinorField, dealiased: bool = True):
    """(-Pi_+(D) N(psi), -Pi_-(D) N(psi)) for psi = psi_+ + psi_-."""
    for p, s in ((psi_plus, 1), (psi_minus, -1)):
        d = projection_defect(p.to_physical(), s)
        if d > PROJECTION_TOL:
            raise SpectralError(f"branch {'+' if s > 0 else '-'} not in the range of its projection: defect {d:.3e}")
    psi = psi_plus.to_physical() + psi_minus.to_physical()
    nl = nonlinearity(psi, dealiased=dealiased)
    return (apply_projection(nl, 1) * -1.0).to_physical(), (apply_projection(nl, -1) * -1.0).to_physical()


# ---------------------------------------------------------------- linear flow


def linear_symbol(grid: GridSpec, t: float) -> np.ndarray:
    """Matrix symbol of the linear flow over time t: e^{it<xi>} Pi_+ + e^{-it<xi>} Pi_-."""
    xi = _xi(grid)
    br = _bracket(grid)[..., None, None]
    a = xi[..., 0, None, None] * ALPHA1 + xi[..., 1, None, None] * ALPHA2 + BETA
    return np.cos(t * br) * np.eye(2) - 1j * np.sin(t * br) * a / br


def _apply_sym(sym: np.ndarray, fh: np.ndarray) -> np.ndarray:
    return np.einsum("ijab,...bij->...aij", sym, fh)


def _fft(values: np.ndarray) -> np.ndarray:
    return np.fft.fft2(values)


def _ifft(values: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(values)


def _as_full(data) -> SpinorField:
    if isinstance(data, SpinorField):
        return data.to_physical()
    plus, minus = data
    return plus.to_physical() + minus.to_physical()


def free_evolution(data, times: Sequence[float]) -> Trajectory:
    psi = _as_full(data)
    fh = psi.to_frequency().values * psi.grid.nyquist_mask()
    vals = np.stack([_ifft(_apply_sym(linear_symbol(psi.grid, t), fh)) for t in times])
    return Trajectory(np.asarray(times, dtype=float), vals, psi.grid)


def branches(traj: Trajectory, index: int) -> tuple[SpinorField, SpinorField]:
    psi = SpinorField(traj.values[index], traj.grid, PHYSICAL)
    return apply_projection(psi, 1), apply_projection(psi, -1)


# ---------------------------------------------------------------- Picard


def _check_size(data, config: SolveConfig) -> SpinorField:
    psi = _as_full(data)
    size = sobolev_half(psi)
    if size > config.epsilon * (1 + 1e-9):
        raise SpectralError(f"data has H^(1/2) norm {size:.4g} above epsilon = {config.epsilon}")
    return psi


def _duhamel_profiles(values: np.ndarray, grid: GridSpec, times: np.ndarray, dealiased: bool) -> np.ndarray:
    """Cumulative trapezoid of i L(-s) N(psi(s)) in frequency, one entry per time."""
    mask = dealias_mask(grid) if dealiased else grid.nyquist_mask()
    out = np.zeros((len(times), 2, grid.n_points, grid.n_points), dtype=complex)
    prev = None
    for n, t in enumerate(times):
        v = values[n]
        dens = beta_density(v).real
        nl = dens[None] * np.einsum("ab,bij->aij", BETA, v)
        g = 1j * _apply_sym(linear_symbol(grid, -t), _fft(nl) * mask)
        if prev is not None:
            out[n] = out[n - 1] + 0.5 * (times[n] - times[n - 1]) * (g + prev)
        prev = g
    return out


def picard_iterate(data, config: SolveConfig):
    """Fixed-point iteration psi <- L(t) psi0 + i int_0^t L(t - s) N(psi(s)) ds.

    Returns the final trajectory and the sup-in-time H^{1/2} difference
    of each iterate from the previous one. Stops once a difference
    falls below ``contraction_tol`` or after ``picard_depth`` updates.
    """
    psi0 = _check_size(data, config)
    grid = psi0.grid
    times = config.dt * np.arange(config.n_steps + 1)
    f0 = psi0.to_frequency().values * grid.nyquist_mask()
    free_h = np.stack([_apply_sym(linear_symbol(grid, t), f0) for t in times])
    cur_h = free_h
    cur = _ifft(cur_h)
    diffs: list[float] = []
    if not config.nonlinear or sobolev_half(psi0) == 0:
        return Trajectory(times, cur, grid), [0.0]
    growth = 0
    for _ in range(config.picard_depth):
        duh = _duhamel_profiles(cur, grid, times, config.dealias)
        new_h = free_h + np.stack([_apply_sym(linear_symbol(grid, t), duh[n]) for n, t in enumerate(times)])
        d = float(_sobolev_half_batch(new_h - cur_h, grid).max())
        if diffs and d > diffs[-1]:
            growth += 1
            if growth >= 3:
                raise ContractionError(
                    f"Picard differences grew three times in a row (last {d:.3e}); use a smaller epsilon"
                )
        else:
            growth = 0
        diffs.append(d)
        cur_h = new_h
        cur = _ifft(cur_h)
        if d < config.contraction_tol:
            break
    return Trajectory(times, cur, grid), diffs


def contraction_factors(diffs: Sequence[float]) -> list[float]:
    return [diffs[i] / diffs[i - 1] for i in range(1, len(diffs)) if diffs[i - 1] > 0]


# ---------------------------------------------------------------- Strang


def _rotate(values: np.ndarray, tau: float) -> np.ndarray:
    """Exact flow of i d/dt psi = -<psi, beta psi> beta psi over time tau."""
    dens = beta_density(values).real
    out = np.empty_like(values)
    out[0] = values[0] * np.exp(1j * tau * dens)
    out[1] = values[1] * np.exp(-1j * tau * dens)
    return out


def evolve(data, config: SolveConfig, direction: int = 1) -> Trajectory:
    """Strang splitting: half linear step, exact nonlinear step, half linear step.

    ``direction = -1`` integrates backwards in time. Aborts when the L^2
    norm exceeds BLOWUP_FACTOR times its initial value.
    """
    psi0 = _check_size(data, config)
    grid = psi0.grid
    n_steps = config.n_steps
    dt = direction * config.dt
    half = linear_symbol(grid, dt / 2)
    mask = dealias_mask(grid) if config.dealias else grid.nyquist_mask()
    fh = psi0.to_frequency().values * grid.nyquist_mask()
    start = math.sqrt(np.sum(np.abs(fh) ** 2))
    saved = [_ifft(fh)]
    for n in range(1, n_steps + 1):
        fh = _apply_sym(half, fh)
        if config.nonlinear:
            fh = _fft(_rotate(_ifft(fh), dt)) * mask
        fh = _apply_sym(half, fh)
        if n % config.save_every == 0:
            nrm = math.sqrt(np.sum(np.abs(fh) ** 2))
            if not np.isfinite(nrm) or nrm > BLOWUP_FACTOR * max(start, 1e-300):
                raise BlowupError(f"field norm grew by {nrm / start:.3g} at step {n}")
            saved.append(_ifft(fh))
    times = dt * config.save_every * np.arange(len(saved))
    if direction < 0:
        # store in increasing time order
        return Trajectory(times[::-1].copy(), np.stack(saved[::-1]), grid)
    return Trajectory(times, np.stack(saved), grid)


def solve(data, config: SolveConfig) -> Trajectory:
    if config.integrator == "strang_split":
        return evolve(data, config)
    traj, _ = picard_iterate(data, config)
    if config.save_every > 1:
        return Trajectory(traj.times[:: config.save_every], traj.values[:: config.save_every], traj.grid)
    return traj


# ---------------------------------------------------------------- diagnostics


def charge_series(traj: Trajectory) -> np.ndarray:
    return traj.grid.dx ** 2 * np.sum(np.abs(traj.values) ** 2, axis=(1, 2, 3))


def sobolev_series(traj: Trajectory) -> np.ndarray:
    return _sobolev_half_batch(_fft(traj.values), traj.grid)


def scattering_profile(traj: Trajectory, sign: int):
    """Pulled-back branch profiles e^{-+ i t <D>} psi_pm(t) and their successive H^{1/2} increments."""
    if sign not in (1, -1):
        raise SpectralError(f"sign must be +1 or -1, got {sign}")
    grid = traj.grid
    br = _bracket(grid)
    proj = projection_symbol(_xi(grid), sign)
    profiles = []
    for t, v in zip(traj.times, traj.values):
        fh = _apply_sym(proj, _fft(v)) * np.exp(-1j * sign * t * br)
        profiles.append(fh)
    prof = np.stack(profiles)
    inc = _sobolev_half_batch(np.diff(prof, axis=0), grid) if len(prof) > 1 else np.zeros(0)
    fields = [SpinorField(p, grid, FREQUENCY) for p in prof]
    return fields, [float(v) for v in inc]


def total_variation(traj: Trajectory) -> float:
    """Sum of profile increments over both branches."""
    return float(sum(sum(scattering_profile(traj, s)[1]) for s in (1, -1)))


def distance_to_free(traj: Trajectory) -> float:
    """sup_t ||psi(t) - psi_free(t)||_{H^{1/2}} with the free flow started from traj at t = 0."""
    i0 = int(np.argmin(np.abs(traj.times)))
    psi0 = SpinorField(traj.values[i0], traj.grid, PHYSICAL)
    free = free_evolution(psi0, traj.times - traj.times[i0])
    return float(sobolev_series(Trajectory(traj.times, traj.values - free.values, traj.grid)).max())


@dataclass
class ScalingRecord:
    epsilons: list
    distances: list
    slope: float
    intercept: float
    stderr: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def cubic_scaling_check(epsilons: Sequence[float], config: SolveConfig, grid: GridSpec = SOLVER_GRID, **data_kw) -> ScalingRecord:
    """Regress log sup_t ||psi - psi_free||_{H^{1/2}} on log epsilon."""
    from scipy.stats import linregress

    eps = [float(e) for e in epsilons]
    if len(eps) < 3:
        raise SpectralError(f"need at least 3 epsilons, got {len(eps)}")
    dist = []
    for e in eps:
        cfg = SolveConfig(**{**asdict(config), "epsilon": e})
        traj = solve(make_data(grid, e, **data_kw), cfg)
        dist.append(distance_to_free(traj))
    fit = linregress(np.log(eps), np.log(dist))
    return ScalingRecord(eps, dist, float(fit.slope), float(fit.intercept), float(fit.stderr))


# ---------------------------------------------------------------- checkpoints

MAGIC = b"DLTRJ001"


def write_checkpoint(traj: Trajectory, path) -> None:
    """Flat binary: magic, header length, JSON header, then little-endian complex128 slices.

    ``path`` may also be a binary file object.
    """
    g = traj.grid
    header = json.dumps(
        {
            "grid": {"n_points": g.n_points, "half_width": g.half_width, "dt": g.dt, "t_max": g.t_max, "r_param": g.r_param, "seed": g.seed},
            "times": [float(t) for t in traj.times],
            "components": int(traj.values.shape[1]) if traj.values.ndim == 4 else 1,
        },
        sort_keys=True,
    ).encode()
    if hasattr(path, "write"):
        _write_frames(path, header, traj)
        return
    with open(path, "wb") as fh:
        _write_frames(fh, header, traj)


def _write_frames(fh, header: bytes, traj: Trajectory) -> None:
    fh.write(MAGIC)
    fh.write(struct.pack("<Q", len(header)))
    fh.write(header)
    fh.write(np.ascontiguousarray(traj.values, dtype="<c16").tobytes())


def read_checkpoint(path) -> Trajectory:
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise SpectralError(f"{path}: not a trajectory checkpoint")
        (size,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(size))
        payload = fh.read()
    g = GridSpec(**header["grid"])
    nt = len(header["times"])
    comps = header["components"]
    shape = (nt, comps, g.n_points, g.n_points) if comps > 1 else (nt, g.n_points, g.n_points)
    vals = np.frombuffer(payload, dtype="<c16").reshape(shape).astype(complex)
    return Trajectory(np.asarray(header["times"]), vals, g)


def summary_csv(traj: Trajectory) -> str:
    """time, charge, H^{1/2} norm, profile increment (both branches) per stored time."""
    q = charge_series(traj)
    h = sobolev_series(traj)
    inc = np.zeros(len(traj.times))
    for s in (1, -1):
        _, d = scattering_profile(traj, s)
        inc[1:] += d
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["time", "charge", "h_half_norm", "increment"])
    for row in zip(traj.times, q, h, inc):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()
