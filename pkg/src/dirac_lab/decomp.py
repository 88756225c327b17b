"""Dyadic, angular and modulation decompositions; tilted frames and frame sets; resonance."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy.signal.windows import tukey

from .spectral import (
    FREQUENCY,
    BracketSymbol,
    SpectralError,
    Trajectory,
    symbol_on_lattice,
)

BUMP_CUTOFF = 1e-8
TAPER_FRACTION = 0.2  # 10% at each end
DEFAULT_PREC_GAP = 31


def _glue(u):
    u = np.asarray(u, dtype=float)
    safe = np.where(u > BUMP_CUTOFF, u, 1.0)
    return np.where(u > BUMP_CUTOFF, np.exp(-1.0 / safe), 0.0)


def smooth_step(s, inner: float, outer: float):
    """Smooth even function equal to 1 for |s| <= inner and 0 for |s| >= outer."""
    a = np.abs(np.asarray(s, dtype=float))
    up = _glue(outer - a)
    down = _glue(a - inner)
    return up / (up + down)


def rho(s):
    """Base cutoff: 1 on [-1, 1], supported in (-2, 2)."""
    return smooth_step(s, 1.0, 2.0)


def chi(k: int, y):
    """Dyadic annulus cutoff at frequency 2^k."""
    y = np.abs(y)
    return rho(2.0 ** (-k) * y) - rho(2.0 ** (-k + 1) * y)


def chi_below(k: int, y):
    return rho(2.0 ** (-k) * np.abs(y))


def chi_tilde(k: int, y):
    """Fattened cutoff chi_{k-1} + chi_k + chi_{k+1}."""
    return chi(k - 1, y) + chi(k, y) + chi(k + 1, y)


# ---------------------------------------------------------------- caps

CAP_INNER = 0.45  # plateau half-width in units of the center spacing
CAP_OUTER = 0.55
CAP_FAT_OUTER = 0.75  # enlarged cutoff reaches 3/2 of the nominal half-width


def cap_count(level: int) -> int:
    """Number of caps of angular width at most 2^-level."""
    return int(math.ceil(2 * math.pi * 2.0 ** level))


@dataclass(frozen=True)
class Cap:
    level: int
    index: int

    def __post_init__(self):
        if self.level < 1:
            raise SpectralError("cap level must be >= 1")
        if not 0 <= self.index < cap_count(self.level):
            raise SpectralError(f"cap index {self.index} out of range at level {self.level}")

    @property
    def spacing(self) -> float:
        return 2 * math.pi / cap_count(self.level)

    @property
    def width(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def angle(self) -> float:
        return self.index * self.spacing

    @property
    def center(self) -> np.ndarray:
        return np.array([math.cos(self.angle), math.sin(self.angle)])

    def offset(self, xi1, xi2):
        """Wrapped angular offset from the center, in units of the spacing."""
        # one global coordinate keeps neighbouring offsets consistent to the last bit
        n = cap_count(self.level)
        v = (np.arctan2(xi2, xi1) % (2 * math.pi)) / self.spacing
        u = v - self.index
        return np.where(u >= n / 2, u - n, np.where(u < -n / 2, u + n, u))


def caps_at(level: int) -> list[Cap]:
    return [Cap(level, i) for i in range(cap_count(level))]


def cap_containing(level: int, direction) -> Cap:
    th = math.atan2(direction[1], direction[0]) % (2 * math.pi)
    n = cap_count(level)
    return Cap(level, int(round(th / (2 * math.pi / n))) % n)


def eta(cap: Cap, xi1, xi2):
    """Angular partition-of-unity member; degree-0 homogeneous."""
    u = cap.offset(xi1, xi2)
    raw = smooth_step(u, CAP_INNER, CAP_OUTER)
    # only the two neighbours can overlap this cap
    left = smooth_step(u + 1, CAP_INNER, CAP_OUTER)
    right = smooth_step(u - 1, CAP_INNER, CAP_OUTER)
    tot = raw + left + right
    return np.divide(raw, tot, out=np.zeros_like(tot, dtype=float), where=raw > 0)


def eta_tilde(cap: Cap, xi1, xi2):
    """Enlarged angular cutoff, equal to 1 on the support of ``eta``."""
    return smooth_step(cap.offset(xi1, xi2), CAP_OUTER, CAP_FAT_OUTER)


# ---------------------------------------------------------------- projections

def _radius(grid):
    k1, k2 = grid.freq_mesh()
    return k1, k2, np.hypot(k1, k2)


def _apply(f, sym: np.ndarray):
    fh = f.to_frequency().values * (sym * f.grid.nyquist_mask())
    out = type(f)(fh, f.grid, FREQUENCY)
    return out if f.representation == FREQUENCY else out.to_physical()


def lp_symbol(grid, k: int, mode: str = "exact") -> np.ndarray:
    # the low-pass piece may sit one level under the resolvable range
    if not (mode == "below" and k == grid.k_min - 1):
        grid.check_level(k)
    _, _, r = _radius(grid)
    if mode == "exact":
        return chi(k, r)
    if mode == "below":
        return chi_below(k, r)
    if mode == "tilde":
        return chi_tilde(k, r)
    raise SpectralError(f"unknown mode {mode!r}")


def lp_project(f, k: int, mode: str = "exact"):
    """Dyadic frequency projection (``exact``, ``below`` or ``tilde``)."""
    return _apply(f, lp_symbol(f.grid, k, mode))


def cap_project(f, k: int, cap: Cap):
    if cap.level > k + 10:
        raise SpectralError(f"cap level {cap.level} exceeds k+10 = {k + 10}")
    k1, k2, r = _radius(f.grid)
    return _apply(f, lp_symbol(f.grid, k) * eta(cap, k1, k2))


# ---------------------------------------------------------------- modulation

def modulation_range(traj: Trajectory) -> tuple[int, int]:
    """Resolvable modulation levels (lo, hi) for a trajectory.

    The lowest level keeps four time-frequency bins inside the plateau;
    the highest level covers every sampled distance to the surface.
    """
    T = traj.window
    lo = int(math.ceil(math.log2(8 * math.pi / T)))
    br_max = float(symbol_on_lattice(traj.grid, BracketSymbol()).max())
    hi = int(math.ceil(math.log2(math.pi / traj.dt + br_max))) + 1
    return lo, hi


class SpacetimeSpectrum:
    """Read-only tapered space-time transform of a trajectory."""

    def __init__(self, traj: Trajectory):
        nt = len(traj.times)
        self.taper = tukey(nt, TAPER_FRACTION)
        shape = (nt,) + (1,) * (traj.values.ndim - 1)
        tapered = traj.values * self.taper.reshape(shape)
        axes = (0, traj.values.ndim - 2, traj.values.ndim - 1)
        # exp(-i(t tau + x xi)) analysis: a free + wave sits at tau = <xi>
        self.hat = np.fft.fftn(tapered, axes=axes)
        self.hat.setflags(write=False)
        self.tau = 2 * math.pi * np.fft.fftfreq(nt, d=traj.dt)
        self.axes = axes
        self.bracket = symbol_on_lattice(traj.grid, BracketSymbol())


_SPECTRA: dict[int, tuple[Trajectory, SpacetimeSpectrum]] = {}


def spacetime_spectrum(traj: Trajectory) -> SpacetimeSpectrum:
    key = id(traj)
    hit = _SPECTRA.get(key)
    if hit is not None and hit[0] is traj:
        return hit[1]
    spec = SpacetimeSpectrum(traj)
    if len(_SPECTRA) > 8:
        _SPECTRA.clear()
    _SPECTRA[key] = (traj, spec)
    return spec


def modulation_distance(traj: Trajectory, sign: int) -> np.ndarray:
    """tau - sign * <xi> on the space-time lattice, shape (nt, n, n)."""
    sp = spacetime_spectrum(traj)
    return sp.tau[:, None, None] - sign * sp.bracket[None]


def modulation_symbol(traj: Trajectory, m: int, sign: int, mode: str, gap: int):
    lo, hi = modulation_range(traj)
    top = m - gap if mode == "prec" else m
    if top < lo or top > hi + 2:
        raise SpectralError(
            f"modulation level {top} not resolvable: window {traj.window:.4g} and step "
            f"{traj.dt:.4g} resolve levels {lo}..{hi + 2}"
        )
    d = modulation_distance(traj, sign)
    if mode == "exact":
        return chi(m, d)
    if mode == "below":
        return chi_below(m, d)
    if mode == "prec":
        return chi_below(m - gap, d)
    raise SpectralError(f"unknown mode {mode!r}")


def modulation_project(
    traj: Trajectory, m: int, sign: int = 1, mode: str = "exact", gap: int = DEFAULT_PREC_GAP
) -> Trajectory:
    """Space-time cutoff to |tau - sign <xi>| ~ 2^m of the tapered trajectory."""
    if sign not in (1, -1):
        raise SpectralError("sign must be +1 or -1")
    sp = spacetime_spectrum(traj)
    sym = modulation_symbol(traj, m, sign, mode, gap)
    if traj.is_spinor:
        sym = sym[:, None]
    out = np.fft.ifftn(sp.hat * sym, axes=sp.axes)
    return traj.with_values(out)


# ---------------------------------------------------------------- frames

def lambda_k(k: int) -> float:
    return (1.0 + 2.0 ** (-2 * k)) ** -0.5


@dataclass(frozen=True)
class Frame:
    """Tilted orthonormal space-time frame with speed ``lam`` along ``omega``."""

    lam: float
    omega: tuple[float, float]

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        if abs(np.hypot(*w) - 1) > 1e-12:
            w = w / np.hypot(*w)
        object.__setattr__(self, "omega", (float(w[0]), float(w[1])))
        if abs(self.lam) > 1:
            raise SpectralError(f"frame speed {self.lam} outside [-1, 1]")

    @property
    def _s(self) -> float:
        return 1.0 / math.sqrt(1 + self.lam ** 2)

    @property
    def theta(self) -> np.ndarray:
        return self._s * np.array([self.lam, self.omega[0], self.omega[1]])

    @property
    def theta_perp(self) -> np.ndarray:
        return self._s * np.array([-1.0, self.lam * self.omega[0], self.lam * self.omega[1]])

    @property
    def theta_0perp(self) -> np.ndarray:
        return np.array([0.0, -self.omega[1], self.omega[0]])

    @property
    def matrix(self) -> np.ndarray:
        """Columns are theta, theta_perp, theta_0perp."""
        return np.column_stack([self.theta, self.theta_perp, self.theta_0perp])

    def flipped(self) -> "Frame":
        """Same speed, opposite direction."""
        return Frame(self.lam, (-self.omega[0], -self.omega[1]))


def frame_coords(frame: Frame, t, x) -> np.ndarray:
    """(t_Theta, x1_Theta, x2_Theta) for points (t, x); broadcasts over leading axes."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    pts = np.concatenate([t[..., None], x], axis=-1)
    return pts @ frame.matrix


@dataclass(frozen=True)
class FrameSet:
    kind: str
    k: int
    omega: tuple[float, float]
    r_param: int
    members: list = field(default_factory=list)
    label: str = ""

    def __len__(self) -> int:
        return len(self.members)

    def lambdas(self) -> np.ndarray:
        return np.array([f.lam for f in self.members])

    def to_json(self) -> str:
        d = {
            "kind": self.kind,
            "k": self.k,
            "omega": list(self.omega),
            "r_param": self.r_param,
            "label": self.label,
            "members": [{"lam": f.lam, "omega": list(f.omega)} for f in self.members],
        }
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FrameSet":
        d = json.loads(text)
        members = [Frame(m["lam"], tuple(m["omega"])) for m in d["members"]]
        return cls(d["kind"], d["k"], tuple(d["omega"]), d["r_param"], members, d.get("label", ""))


@dataclass(frozen=True)
class FrameScale:
    """Thresholds of the frame-set construction.

    ``low_cut`` is the largest level treated as low frequency, ``margin`` the
    offset in the lattice step exponent and the single-frame threshold.
    """

    low_cut: int = 99
    margin: int = 20


ASYMPTOTIC_SCALE = FrameScale()


def _lattice_multiples(step_exp: int, lo: Fraction, hi: Fraction) -> list[Fraction]:
    """All q * 2^step_exp inside [lo, hi], exactly."""
    step = Fraction(2) ** step_exp
    q_lo = math.ceil(lo / step)
    q_hi = math.floor(hi / step)
    return [q * step for q in range(q_lo, q_hi + 1)]


def speed_from_m(m) -> float:
    m = float(m)
    return 1.0 / math.sqrt(1.0 + m ** -2)


def lambda_set_count(k: int, r: int, scale: FrameScale = ASYMPTOTIC_SCALE) -> int:
    """Closed-form cardinality of the Lambda frame set."""
    if k <= scale.low_cut:
        return 2 * math.floor(2.0 ** r / math.sqrt(1 + 2.0 ** (-2 * k - 4))) + 1
    if k >= r + scale.margin:
        return 1
    step = Fraction(2) ** (2 * k - r - scale.margin)
    lo, hi = Fraction(2) ** (k - 3), Fraction(2) ** (k + 3)
    return math.floor(hi / step) - math.ceil(lo / step) + 1


def build_frame_set(
    kind: str, k: int, omega, r: int, scale: FrameScale = ASYMPTOTIC_SCALE, max_members: int = 1 << 20
) -> FrameSet:
    """Enumerate the Lambda or Omega frame set at level k for horizon exponent r."""
    if r < 1:
        raise SpectralError("r must be >= 1")
    omega = tuple(float(v) for v in np.asarray(omega, dtype=float) / np.hypot(*omega))
    if kind == "Lambda":
        n = lambda_set_count(k, r, scale)
        if n > max_members:
            raise SpectralError(f"Lambda set has {n} members, above the limit {max_members}")
        if k <= scale.low_cut:
            imax = math.floor(2.0 ** r / math.sqrt(1 + 2.0 ** (-2 * k - 4)))
            lams = [i * 2.0 ** (-r) for i in range(-imax, imax + 1)]
        elif k >= r + scale.margin:
            lams = [lambda_k(k)]
        else:
            ms = _lattice_multiples(
                2 * k - r - scale.margin, Fraction(2) ** (k - 3), Fraction(2) ** (k + 3)
            )
            lams = [speed_from_m(m) for m in ms]
        members = [Frame(lam, omega) for lam in lams]
    elif kind == "Omega":
        e = r - k - 8
        imax = math.floor(2.0 ** e) if e >= 0 else 0
        ang0 = math.atan2(omega[1], omega[0])
        rot = 2.0 ** (-r)
        members = [
            Frame(lambda_k(k), (math.cos(ang0 + i * rot), math.sin(ang0 + i * rot)))
            for i in range(-imax, imax + 1)
        ]
    else:
        raise SpectralError(f"unknown frame-set kind {kind!r}")
    return FrameSet(kind, k, omega, r, members)


def lambda_j_speed(k: int, j: int, sub_bits: int) -> float:
    """Speed attached to the j-th radial sub-annulus of width 2^(k - sub_bits)."""
    return 1.0 / math.sqrt(1.0 + 2.0 ** (-2 * k + 2 * sub_bits) / j ** 2)


def j_window(sub_bits: int) -> tuple[int, int]:
    return 2 ** (sub_bits - 2) - 1, 2 ** (sub_bits + 2) + 1


def build_frame_set_j(k: int, omega, j: int, r: int, sub_bits: int) -> FrameSet:
    """Frames whose speeds sample the j-th radial sub-annulus on the 2^(2k-r-sub_bits) lattice."""
    lo_j, hi_j = j_window(sub_bits)
    if not lo_j <= j <= hi_j:
        raise SpectralError(f"j={j} outside [{lo_j}, {hi_j}]")
    omega = tuple(float(v) for v in np.asarray(omega, dtype=float) / np.hypot(*omega))
    base = Fraction(2) ** (k - sub_bits)
    ms = _lattice_multiples(2 * k - r - sub_bits, (j - 1) * base, (j + 1) * base)
    ms = [m for m in ms if m > 0]
    members = [Frame(speed_from_m(m), omega) for m in ms]
    return FrameSet("Lambda_j", k, omega, r, members, label=f"j={j},sub_bits={sub_bits}")


# ---------------------------------------------------------------- resonance

def resonance(xi1, xi2, s1: int, s2: int):
    """Output bracket minus the combined input brackets.

    Opposite signs: <xi1 - xi2> - (<xi1> + <xi2>).
    Equal signs: <xi1 - xi2> - |<xi1> - <xi2>|.
    """
    xi1 = np.asarray(xi1, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    b = lambda v: np.sqrt(1.0 + np.sum(v ** 2, axis=-1))  # noqa: E731
    out_br = b(xi1 - xi2)
    if s1 != s2:
        res = out_br - (b(xi1) + b(xi2))
    else:
        res = out_br - np.abs(b(xi1) - b(xi2))
    return float(res) if np.ndim(res) == 0 else res


def caps_to_json(level: int) -> str:
    return json.dumps(
        [dict(asdict(c), center=list(c.center), width=c.width) for c in caps_at(level)],
        sort_keys=True,
    )


def resonance_scaling(ks=range(6, 13), max_l_gap: int = 4):
    """Opposite-sign resonance at xi_2 = -xi_1 + (perpendicular of size 2^(k-l)), |xi_1| = 2^k.

    Evaluates every (k, l) with 1 <= l <= k - max_l_gap and regresses
    log2 |resonance| on k and l jointly. Returns (k slope, l slope, rows)
    with rows of (k, l, resonance).
    """
    rows = []
    for k in ks:
        for l in range(1, k - max_l_gap + 1):
            xi1 = np.array([2.0 ** k, 0.0])
            xi2 = -xi1 + np.array([0.0, 2.0 ** (k - l)])
            rows.append((k, l, resonance(xi1, xi2, 1, -1)))
    if len(rows) < 3:
        raise SpectralError("need at least three (k, l) pairs")
    a = np.array([[k, l, 1.0] for k, l, _ in rows])
    y = np.log2(np.abs([r for _, _, r in rows]))
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    return float(coef[0]), float(coef[1]), rows


def resonance_window_check(n_configs: int = 1000, seed: int = 0, k_range=(8, 12), min_gap: int = 4, jitter: float = 0.125):
    """Equal-sign resonance against 2^m, m = k1 + k2 - k - 2l, on seeded configurations.

    |xi_j| = 2^(k_j + u_j) and the angle is 2^(-l + v) with u, v uniform in
    [-jitter, jitter]; k is the rounded log2 of |xi_1 - xi_2|. Returns the
    fraction with |resonance| in [2^(m-2), 2^(m+2)] and the extreme values
    of log2 |resonance| - m.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    dev = np.empty(n_configs)
    for i in range(n_configs):
        k1, k2 = (int(v) for v in rng.integers(k_range[0], k_range[1] + 1, size=2))
        l = int(rng.integers(1, min(k1, k2) - min_gap + 1))
        r1, r2 = 2.0 ** (np.array([k1, k2]) + rng.uniform(-jitter, jitter, 2))
        ang = 2.0 ** (-l + rng.uniform(-jitter, jitter))
        base = rng.uniform(0, 2 * math.pi)
        xi1 = r1 * np.array([math.cos(base), math.sin(base)])
        xi2 = r2 * np.array([math.cos(base + ang), math.sin(base + ang)])
        k = int(round(math.log2(np.hypot(*(xi1 - xi2)))))
        m = k1 + k2 - k - 2 * l
        dev[i] = math.log2(abs(resonance(xi1, xi2, 1, 1))) - m
    inside = (dev >= -2) & (dev <= 2)
    return float(inside.mean()), float(dev.min()), float(dev.max())
