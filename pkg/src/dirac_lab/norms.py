"""Computable seminorms and empirical-constant harnesses for free-wave estimates.

The harnesses replace the solution spaces by free waves with L^2 data and
report lhs / rhs ratios. Grids and time windows are measured in units of
2^-k_min, the uncertainty scale of the lowest frequency in a configuration,
so a dyadic sweep costs the same at every level.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .decomp import Cap, Frame, FrameSet, cap_count, chi, eta, frame_coords, modulation_project, modulation_range
from .spectral import GridSpec, ScalarField, SpectralError, Trajectory, BracketSymbol, symbol_on_lattice
from .spinor import BETA, SpinorField, projection_symbol

FRAME_KINDS = ("L2t_Linfx", "L2x2_Linf_tx1", "Linft_L2x", "Linfx2_L2tx1")


def _modulus(values: np.ndarray, spinor: bool) -> np.ndarray:
    """Pointwise |u|, Euclidean over spinor components (axis -3)."""
    if spinor:
        return np.sqrt(np.sum(np.abs(values) ** 2, axis=-3))
    return np.abs(values)


def _lq(a: np.ndarray, q: float, weight: float, axes) -> np.ndarray:
    if math.isinf(q):
        return a.max(axis=axes)
    return (weight * np.sum(a ** q, axis=axes)) ** (1.0 / q)


def _check_exponent(name: str, v: float) -> None:
    if not (v >= 1 or math.isinf(v)):
        raise SpectralError(f"{name} must lie in [1, inf], got {v}")


def mixed_norm(traj: Trajectory, p: float, q: float) -> float:
    """L^p_t L^q_x norm by Riemann sums (sup for an infinite exponent)."""
    _check_exponent("p", p)
    _check_exponent("q", q)
    a = _modulus(traj.values, traj.is_spinor)
    space = _lq(a, q, traj.grid.dx ** 2, (-2, -1))
    return float(_lq(space, p, traj.dt, 0))


def sobolev_norm(f, sigma: float) -> float:
    """H^sigma norm, Parseval sum with weight <xi>^(2 sigma)."""
    g = f.grid
    fh = f.to_frequency().values
    w = symbol_on_lattice(g, BracketSymbol()) ** (2 * sigma)
    dens = np.abs(fh) ** 2
    if dens.ndim == 3:
        dens = dens.sum(axis=0)
    return float(math.sqrt(g.dx ** 2 / g.n_points ** 2 * np.sum(w * dens)))


def spacetime_l2(traj: Trajectory) -> float:
    return float(math.sqrt(traj.dt * traj.grid.dx ** 2 * np.sum(np.abs(traj.values) ** 2)))


def windowed_l2(traj: Trajectory) -> float:
    """Space-time L^2 of the trajectory times the modulation taper."""
    from .decomp import spacetime_spectrum

    taper = spacetime_spectrum(traj).taper
    shape = (len(taper),) + (1,) * (traj.values.ndim - 1)
    return float(math.sqrt(traj.dt * traj.grid.dx ** 2 * np.sum(np.abs(traj.values * taper.reshape(shape)) ** 2)))


def xbq_norm(traj: Trajectory, sign: int, b: float, q: float) -> float:
    """l^q over modulation levels m of 2^(bm) ||Q_m^sign traj||_{L^2}.

    The lowest resolvable level collects every modulation below it, so the
    pieces form a partition of unity.
    """
    _check_exponent("q", q)
    lo, hi = modulation_range(traj)
    if hi < lo:
        raise SpectralError(f"empty modulation range {lo}..{hi}")
    terms = []
    for m in range(lo, hi + 1):
        piece = modulation_project(traj, m, sign, "below" if m == lo else "exact")
        terms.append(2.0 ** (b * m) * spacetime_l2(piece))
    terms = np.asarray(terms)
    if math.isinf(q):
        return float(terms.max())
    return float(np.sum(terms ** q) ** (1.0 / q))


# ---------------------------------------------------------------- V^2


def pullback_profiles(traj: Trajectory, sign: int, max_times: Optional[int] = None):
    """Frequency arrays of exp(-sign i t <D>) u(t), optionally thinned to ``max_times`` samples."""
    if sign not in (1, -1):
        raise SpectralError(f"sign must be +1 or -1, got {sign}")
    idx = np.arange(len(traj.times))
    if max_times is not None and len(idx) > max_times:
        idx = np.unique(np.round(np.linspace(0, len(idx) - 1, max_times)).astype(int))
    br = symbol_on_lattice(traj.grid, BracketSymbol())
    out = []
    for i in idx:
        fh = np.fft.fft2(traj.values[i])
        out.append(fh * np.exp(-1j * sign * traj.times[i] * br))
    return traj.times[idx], np.stack(out)


def profile_distances(traj: Trajectory, sign: int, max_times: Optional[int] = 256):
    """Times and the matrix of L^2 distances between pulled-back profiles."""
    times, prof = pullback_profiles(traj, sign, max_times)
    g = traj.grid
    flat = prof.reshape(len(times), -1)
    gram = flat.conj() @ flat.T
    sq = np.real(np.diag(gram))
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2 * gram.real, 0.0)
    # the Gram expansion cancels to about eps * |u|^2; below that a distance is round-off
    d2[d2 < 64 * np.finfo(float).eps * max(sq.max(), 1e-300)] = 0.0
    return times, np.sqrt(d2 * g.dx ** 2 / g.n_points ** 2)


def _partition_score(dist: np.ndarray, pts) -> float:
    pts = list(pts)
    return float(sum(dist[a, b] ** 2 for a, b in zip(pts[:-1], pts[1:])))


def v2_search(dist: np.ndarray, n_partitions: int, proposals: int = 200, seed: int = 0) -> tuple[float, list]:
    """Largest sum of squared steps over increasing index sequences of at most n points.

    A uniform coarse pass seeds a simulated-annealing refinement; the
    search for n points starts from the best sequence found for n - 1,
    so the value never decreases with n.
    """
    if n_partitions < 2:
        raise SpectralError(f"n_partitions must be at least 2, got {n_partitions}")
    n_times = dist.shape[0]
    rng = np.random.Generator(np.random.Philox(seed))
    best_pts = [0, n_times - 1]
    best = _partition_score(dist, best_pts)
    scale = max(float(dist.max()) ** 2, 1e-300)
    for n in range(2, n_partitions + 1):
        coarse = sorted(set(np.round(np.linspace(0, n_times - 1, n)).astype(int).tolist()))
        c_score = _partition_score(dist, coarse)
        if c_score > best:
            best, best_pts = c_score, coarse
        cur, cur_score = list(best_pts), best
        for step in range(proposals):
            temp = scale * 0.1 * (1 - step / proposals) + 1e-300
            cand = list(cur)
            move = rng.integers(3)
            free = sorted(set(range(n_times)) - set(cand))
            if move == 0 and len(cand) < n and free:
                cand.append(int(rng.choice(free)))
            elif move == 1 and len(cand) > 2:
                cand.pop(int(rng.integers(len(cand))))
            elif free:
                cand[int(rng.integers(len(cand)))] = int(rng.choice(free))
            cand = sorted(set(cand))
            if len(cand) < 2:
                continue
            s = _partition_score(dist, cand)
            if s >= cur_score or rng.random() < math.exp((s - cur_score) / temp):
                cur, cur_score = cand, s
                if s > best:
                    best, best_pts = s, list(cand)
    return math.sqrt(best), best_pts


def v2_lower_bound(traj: Trajectory, sign: int, n_partitions: int, proposals: int = 200, seed: int = 0, max_times: int = 256) -> float:
    """Certified lower bound of sup_t ||u(t)||_{L^2} plus the V^2 seminorm of the pulled-back profile."""
    _, dist = profile_distances(traj, sign, max_times)
    v2, _ = v2_search(dist, n_partitions, proposals, seed)
    a = _modulus(traj.values, traj.is_spinor)
    sup = float(np.sqrt(traj.grid.dx ** 2 * np.sum(a ** 2, axis=(-2, -1))).max())
    return sup + v2


# ---------------------------------------------------------------- frame norms


def _outer_inner(kind: str) -> tuple[int, bool]:
    """Index of the outer frame coordinate and whether the inner norm is a sup."""
    if kind not in FRAME_KINDS:
        raise SpectralError(f"unknown frame norm kind {kind!r}; expected one of {FRAME_KINDS}")
    outer = 0 if kind in ("L2t_Linfx", "Linft_L2x") else 2
    return outer, kind in ("L2t_Linfx", "L2x2_Linf_tx1")


def _frame_coordinate(traj: Trajectory, frame: Frame, axis: int, t: float) -> np.ndarray:
    X1, X2 = traj.grid.mesh()
    return frame_coords(frame, np.full(X1.shape, t), np.stack([X1, X2], axis=-1))[..., axis]


def _slab_position(traj: Trajectory, frame: Frame, kind: str, slab: Optional[float]):
    """Outer frame coordinate of every sample in units of the slab width."""
    outer, _ = _outer_inner(kind)
    if slab is None:
        # projected lattice gaps never exceed dx; the margin keeps slab edges
        # off lattice values
        slab = max(traj.dt, 1.5 * traj.grid.dx)
    pos = np.stack([_frame_coordinate(traj, frame, outer, t) / slab for t in traj.times])
    return pos, slab


def _binned_norm(traj: Trajectory, values: np.ndarray, pos: np.ndarray, slab: float, kind: str) -> float:
    _, sup_inner = _outer_inner(kind)
    idx = np.floor(pos).astype(np.int64).ravel()
    lo = int(idx.min())
    shifted = idx - lo
    counts = np.bincount(shifted)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        i = int(empty[0]) + lo
        raise SpectralError(f"degenerate slab {i}: [{i * slab:.4g}, {(i + 1) * slab:.4g}) holds no samples")
    a = _modulus(values, traj.is_spinor).ravel()
    if sup_inner:
        peak = np.zeros(len(counts))
        np.maximum.at(peak, shifted, a)
        return float(math.sqrt(slab * np.sum(peak ** 2)))
    # linear deposition between neighbouring slab centres evens out how
    # many lattice samples each slab receives
    centred = pos.ravel() - 0.5
    left = np.floor(centred).astype(np.int64)
    frac = centred - left
    w = a ** 2 * traj.dt * traj.grid.dx ** 2
    base = int(left.min())
    mass = np.bincount(left - base, weights=w * (1 - frac), minlength=len(counts) + 2)
    mass += np.bincount(left - base + 1, weights=w * frac, minlength=len(mass))[: len(mass)]
    return float(math.sqrt(mass.max() / slab))


def frame_mixed_norm(traj: Trajectory, frame: Frame, kind: str, slab: Optional[float] = None) -> float:
    """Mixed norm in the coordinates of a tilted frame, by slab binning.

    Every space-time sample is assigned to the slab of its outer frame
    coordinate (t_Theta or x2_Theta). An inner sup is the largest modulus in
    the slab; an inner L^2 is the slab's share of |u|^2 dt dx^2 (deposited
    linearly between neighbouring slabs) divided by the slab width. ``slab`` defaults to max(dt, 1.5 dx).
    """
    pos, slab = _slab_position(traj, frame, kind, slab)
    return _binned_norm(traj, traj.values, pos, slab, kind)


def sum_frame_norm_upper(traj: Trajectory, frames: FrameSet, kind: str, slab: Optional[float] = None) -> float:
    """Upper bound on the infimum over decompositions u = sum_Theta u_Theta of sum ||u_Theta||.

    Each sample goes to the frame with the smallest |t_Theta|, where that
    frame's kernel majorizer is largest. The better of this decomposition
    and the best single-frame norm is returned.
    """
    members = list(frames.members)
    if not members:
        raise SpectralError("empty frame set")
    _outer_inner(kind)
    singles = []
    dist = []
    indices = []
    for fr in members:
        idx, sl = _slab_position(traj, fr, kind, slab)
        indices.append((idx, sl))
        singles.append(_binned_norm(traj, traj.values, idx, sl, kind))
        dist.append(np.abs(np.stack([_frame_coordinate(traj, fr, 0, t) for t in traj.times])))
    if len(members) == 1:
        return singles[0]
    owner = np.argmin(np.stack(dist), axis=0)
    total = 0.0
    for i, (idx, sl) in enumerate(indices):
        mask = owner == i
        if traj.is_spinor:
            mask = mask[:, None]
        total += _binned_norm(traj, np.where(mask, traj.values, 0), idx, sl, kind)
    return float(min(total, min(singles)))


# ---------------------------------------------------------------- ratio harnesses


@dataclass
class RatioReport:
    """Trials (seed, lhs, rhs_surrogate, ratio) of one or more dyadic configurations."""

    trials: list
    max_ratio: float
    median_ratio: float
    dyadic_params: dict
    stable: bool = True
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for seed, lhs, rhs, ratio in self.trials:
            if not rhs > 0:
                raise SpectralError(f"non-positive rhs surrogate {rhs} in trial {seed}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["seed", "lhs", "rhs_surrogate", "ratio", "config"])
        cfg = json.dumps(self.dyadic_params, sort_keys=True)
        for seed, lhs, rhs, ratio in self.trials:
            w.writerow([seed, repr(float(lhs)), repr(float(rhs)), repr(float(ratio)), cfg])
        return buf.getvalue()


def _report(trials, params, extra=None) -> RatioReport:
    ratios = np.array([t[3] for t in trials])
    return RatioReport(
        [tuple(t) for t in trials], float(ratios.max()), float(np.median(ratios)), params, True, extra or {}
    )


def dyadic_sweep(reports: Sequence[RatioReport], factor: float = 2.0) -> RatioReport:
    """Merge reports of a dyadic sweep; stable iff all max ratios lie within ``factor``."""
    trials = [t for r in reports for t in r.trials]
    maxes = [r.max_ratio for r in reports]
    merged = _report(trials, {"sweep": [r.dyadic_params for r in reports]})
    merged.stable = bool(max(maxes) <= factor * min(maxes))
    merged.extra = {"max_ratios": maxes}
    return merged


@dataclass(frozen=True)
class HarnessScale:
    """Box, window and sampling of a harness, in units of 2^-k_min.

    The time window is [-window, window]; ``samples`` is the number of
    time samples per unit. Data at level k sits in a Gaussian window of
    ``width`` * 2^-k.
    """

    n_points: int = 128
    box: float = 12.0
    window: float = 8.0
    width: float = 1.0
    samples: int = 8

    def grid(self, k_lo: int, k_hi: int, time_shift: int = 0) -> GridSpec:
        unit = 2.0 ** (-k_lo)
        t_unit = unit * 2.0 ** time_shift
        g = GridSpec(
            n_points=self.n_points,
            half_width=self.box * unit,
            dt=t_unit / self.samples,
            t_max=self.window * t_unit,
        )
        if 2.0 ** (k_hi + 1 + time_shift) > g.dealias_radius:
            raise SpectralError(
                f"level {k_hi + time_shift} needs frequencies up to {2.0 ** (k_hi + 1 + time_shift):.4g} but the grid resolves "
                f"{g.dealias_radius:.4g}; raise n_points or lower the level span"
            )
        return g

    def width_at(self, k: int) -> float:
        """Spatial window of data at level k: its own uncertainty scale."""
        return self.width * 2.0 ** (-k)

    def cap_grid(self, k_lo: int, k_hi: int, l: int) -> GridSpec:
        """Grid for cap-confined packets: box in units of 2^(l - k_lo), window in 2^(2l - k_lo)."""
        return self.grid(k_lo - l, k_hi - l, time_shift=l)

    def times(self, grid: GridSpec) -> np.ndarray:
        n = int(round(grid.t_max / grid.dt))
        return grid.dt * np.arange(-n, n + 1)


DEFAULT_SCALE = HarnessScale()


def localized_data(grid: GridSpec, k: int, seed: int, width: float, cap: Optional[Cap] = None, direction: float = 1.0, spinor: bool = True):
    """Random data localized at frequency 2^k in a Gaussian spatial window.

    Complex Gaussian coefficients times the dyadic cutoff, a Gaussian window
    of ``width``, then the cutoff again (and the cap partition if given;
    ``direction = -1`` uses the antipodal cap). Returned in frequency form.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    n = grid.n_points
    shape = (2, n, n) if spinor else (n, n)
    coef = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    k1, k2 = grid.freq_mesh()
    r = np.hypot(k1, k2)
    sym = chi(k, r) * grid.nyquist_mask()
    if cap is not None:
        sym = sym * eta(cap, direction * k1, direction * k2)
    X1, X2 = grid.mesh()
    win = np.exp(-(X1 ** 2 + X2 ** 2) / (2 * width ** 2))
    vals = np.fft.ifft2(coef * sym) * win
    return np.fft.fft2(vals) * sym


def _l2_hat(fh: np.ndarray, grid: GridSpec) -> float:
    return float(math.sqrt(grid.dx ** 2 / grid.n_points ** 2 * np.sum(np.abs(fh) ** 2)))


class FreeSpinor:
    """exp(sign i t <D>) Pi_sign(D) f sampled on demand."""

    def __init__(self, fh: np.ndarray, grid: GridSpec, sign: int):
        k1, k2 = grid.freq_mesh()
        proj = projection_symbol(np.stack([k1, k2], axis=-1), sign)
        self.hat = np.einsum("ijab,bij->aij", proj, fh)
        self.sign = sign
        self.bracket = np.sqrt(1 + k1 ** 2 + k2 ** 2)
        self.k1, self.k2 = k1, k2
        self.norm = _l2_hat(self.hat, grid)

    def at(self, t: float, shift=None) -> np.ndarray:
        """Field at time t on the lattice translated by ``shift``."""
        phase = self.sign * t * self.bracket
        if shift is not None:
            phase = phase + shift[0] * self.k1 + shift[1] * self.k2
        return np.fft.ifft2(self.hat * np.exp(1j * phase))


def _pair_density(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """<a, beta b> pointwise for spinor arrays (2, n, n)."""
    return np.sum(a.conj() * np.einsum("ab,bij->aij", BETA, b), axis=0)


def _norm_time(series: np.ndarray, p: float, dt: float) -> float:
    if math.isinf(p):
        return float(series.max())
    return float((dt * np.sum(series ** p)) ** (1.0 / p))


def _check_signs(signs, count: int) -> tuple:
    signs = tuple(int(s) for s in signs)
    if len(signs) != count or any(s not in (1, -1) for s in signs):
        raise SpectralError(f"need {count} signs in {{+1, -1}}, got {signs}")
    return signs


def strichartz_ratio(k: int, p: float = 4.0, q: float = math.inf, sign: int = 1, n_seeds: int = 3, scale: HarnessScale = DEFAULT_SCALE) -> RatioReport:
    """||P_k u||_{L^p_t L^q_x} / (2^(ks) ||f||_{L^2}) for free waves, s = 1 - 2/q - 1/p."""
    _check_exponent("p", p)
    _check_exponent("q", q)
    s = 1 - 2 / q - 1 / p
    grid = scale.grid(k, k)
    times = scale.times(grid)
    trials = []
    for seed in range(n_seeds):
        fh = localized_data(grid, k, seed, scale.width_at(k), spinor=False)
        f = ScalarField(fh, grid, "frequency")
        br = symbol_on_lattice(grid, BracketSymbol())
        series = []
        for t in times:
            u = np.abs(np.fft.ifft2(fh * np.exp(1j * sign * t * br)))
            series.append(_lq(u, q, grid.dx ** 2, (-2, -1)))
        lhs = _norm_time(np.asarray(series), p, grid.dt)
        rhs = 2.0 ** (k * s) * _l2_hat(f.values, grid)
        trials.append((seed, lhs, rhs, lhs / rhs))
    return _report(trials, {"k": k, "p": p, "q": q, "sign": sign, "s": s})


def _parallel_pairs(level: int, reach: float, signs) -> list:
    """Cap index pairs at ``level`` whose signed directions are within ``reach``."""
    n = cap_count(level)
    sp = 2 * math.pi / n
    flip = signs[0] * signs[1] < 0
    out = []
    for a in range(n):
        for b in range(n):
            ang_b = b * sp + (math.pi if flip else 0.0)
            d = abs((a * sp - ang_b + math.pi) % (2 * math.pi) - math.pi)
            if d <= reach + 1e-12:
                out.append((a, b))
    return out


def bilinear_ratio(
    k1: int,
    k2: int,
    l: Optional[int] = None,
    signs=(1, 1),
    n_seeds: int = 3,
    scale: HarnessScale = DEFAULT_SCALE,
    parallel: bool = False,
    parallel_level: int = 4,
) -> RatioReport:
    """||<Pi psi_1, beta Pi psi_2>||_{L^2} / (2^(min(k1,k2)/2) ||f_1|| ||f_2||) for free waves.

    With a cap level ``l`` both data are confined to one cap of that level
    (psi_2 to the antipodal cap when the signs differ), so the two waves
    propagate in parallel. The packets are then sampled on a box moving
    with their group velocity, sized by the transverse uncertainty scale
    2^(l - k_min), over a window measured in the coherence time
    2^(2l - k_min). With ``parallel`` the part of the product coming from
    cap pairs within 2^(3-c) of each other, c = min(k2, parallel_level), is
    measured and reported separately in ``extra``.
    """
    signs = _check_signs(signs, 2)
    if l is not None and l > min(k1, k2) + 10:
        raise SpectralError(f"cap level {l} above min(k1, k2) + 10")
    lo, hi = min(k1, k2), max(k1, k2)
    cap = Cap(l, 0) if l is not None and l >= 1 else None
    grid = scale.cap_grid(lo, hi, l) if cap is not None else scale.grid(lo, hi)
    times = scale.times(grid)
    velocity = None
    if cap is not None:
        speed = 2.0 ** lo / math.sqrt(1 + 4.0 ** lo)
        velocity = -signs[0] * speed * cap.center
    trials = []
    par_values = []
    for seed in range(n_seeds):
        f1 = localized_data(grid, k1, 2 * seed, scale.width_at(k1), cap)
        f2 = localized_data(grid, k2, 2 * seed + 1, scale.width_at(k2), cap, direction=signs[0] * signs[1])
        w1 = FreeSpinor(f1, grid, signs[0])
        w2 = FreeSpinor(f2, grid, signs[1])
        series = []
        for t in times:
            shift = None if velocity is None else velocity * t
            series.append(_l2_x(_pair_density(w1.at(t, shift), w2.at(t, shift)), grid))
        lhs = _norm_time(np.asarray(series), 2.0, grid.dt)
        rhs = 2.0 ** (lo / 2) * w1.norm * w2.norm
        trials.append((seed, lhs, rhs, lhs / rhs))
        if parallel:
            par_values.append(_parallel_term(w1, w2, grid, times, min(k2, parallel_level), signs) / rhs)
    params = {"k1": k1, "k2": k2, "l": l, "signs": list(signs), "scale": asdict(scale)}
    extra = {"parallel_ratio": par_values} if parallel else {}
    return _report(trials, params, extra)


def _l2_x(u: np.ndarray, grid: GridSpec) -> float:
    return float(math.sqrt(grid.dx ** 2 * np.sum(np.abs(u) ** 2)))


def _parallel_term(w1: FreeSpinor, w2: FreeSpinor, grid: GridSpec, times, level: int, signs) -> float:
    k1, k2 = grid.freq_mesh()
    n = cap_count(level)
    caps = [Cap(level, i) for i in range(n)]
    eta1 = [eta(c, k1, k2) for c in caps]
    flip = -1.0 if signs[0] * signs[1] < 0 else 1.0
    eta2 = [eta(c, flip * k1, flip * k2) for c in caps]
    reach = 2.0 ** (3 - level)
    pairs = _parallel_pairs(level, reach, signs)
    partners: dict[int, list] = {}
    for a, b in pairs:
        partners.setdefault(a, []).append(b)
    series = []
    for t in times:
        ph1 = w1.hat * np.exp(1j * w1.sign * t * w1.bracket)
        ph2 = w2.hat * np.exp(1j * w2.sign * t * w2.bracket)
        acc = np.zeros((grid.n_points, grid.n_points), dtype=complex)
        for a, bs in partners.items():
            near = np.sum([eta2[b] for b in bs], axis=0)
            acc += _pair_density(np.fft.ifft2(ph1 * eta1[a]), np.fft.ifft2(ph2 * near))
        series.append(_l2_x(acc, grid))
    return _norm_time(np.asarray(series), 2.0, grid.dt)


def trilinear_ratio(
    k1: int,
    k2: int,
    k3: int,
    p: float = 1.5,
    signs=(1, 1, 1),
    n_seeds: int = 3,
    mode: str = "TRI1",
    scale: HarnessScale = DEFAULT_SCALE,
) -> RatioReport:
    """Free-wave ratio for the two trilinear estimates.

    TRI1 (4/3 < p <= 2, k1 <= k2 <= k3):
      2^((1/p - 1/2) k3) ||<Pi psi_1, beta Pi psi_2> beta Pi psi_3||_{L^p_t L^2_x}
      over 2^((3/8 - 1/(2p))(k1 - k2)) 2^((1 - 1/p)(k2 - k3)) prod 2^(k_j/2) ||f_j||.
    TRI2 (2 <= p <= inf, k1 <= min(k2, k3)):
      ||Pi psi_1 <Pi psi_2, beta Pi psi_3>||_{L^p_t L^1_x} over 2^((1 - 1/p) k1) prod ||f_j||.
    """
    signs = _check_signs(signs, 3)
    if mode == "TRI1":
        if not (4 / 3 < p <= 2):
            raise SpectralError(f"TRI1 needs 4/3 < p <= 2, got p = {p}")
        if not k1 <= k2 <= k3:
            raise SpectralError(f"TRI1 needs k1 <= k2 <= k3, got {k1}, {k2}, {k3}")
    elif mode == "TRI2":
        if not p >= 2:
            raise SpectralError(f"TRI2 needs 2 <= p <= inf, got p = {p}")
        if not k1 <= min(k2, k3):
            raise SpectralError(f"TRI2 needs k1 <= min(k2, k3), got {k1}, {k2}, {k3}")
    else:
        raise SpectralError(f"mode must be TRI1 or TRI2, got {mode!r}")
    lo, hi = min(k1, k2, k3), max(k1, k2, k3)
    grid = scale.grid(lo, hi)
    times = scale.times(grid)
    trials = []
    for seed in range(n_seeds):
        ws = [FreeSpinor(localized_data(grid, k, 3 * seed + i, scale.width_at(k)), grid, s) for i, (k, s) in enumerate(zip((k1, k2, k3), signs))]
        series = []
        for t in times:
            a, b, c = (w.at(t) for w in ws)
            if mode == "TRI1":
                prod = _pair_density(a, b)[None] * np.einsum("ab,bij->aij", BETA, c)
                series.append(_l2_x(prod, grid))
            else:
                prod = a * _pair_density(b, c)[None]
                series.append(float(grid.dx ** 2 * np.sum(np.sqrt(np.sum(np.abs(prod) ** 2, axis=0)))))
        norms = np.prod([w.norm for w in ws])
        if mode == "TRI1":
            lhs = 2.0 ** ((1 / p - 0.5) * k3) * _norm_time(np.asarray(series), p, grid.dt)
            rhs = 2.0 ** ((3 / 8 - 1 / (2 * p)) * (k1 - k2)) * 2.0 ** ((1 - 1 / p) * (k2 - k3)) * 2.0 ** ((k1 + k2 + k3) / 2) * norms
        else:
            lhs = _norm_time(np.asarray(series), p, grid.dt)
            rhs = 2.0 ** ((1 - 1 / p) * k1) * norms
        trials.append((seed, lhs, rhs, lhs / rhs))
    params = {"k1": k1, "k2": k2, "k3": k3, "p": p, "signs": list(signs), "mode": mode, "scale": asdict(scale)}
    return _report(trials, params)
