"""Dirac matrices, the projections onto the two half-wave branches, and the cubic nonlinearity."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .spectral import (
    FREQUENCY,
    PHYSICAL,
    BracketSymbol,
    GridSpec,
    ScalarField,
    SpectralError,
    symbol_on_lattice,
)

I2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class DiracMatrices:
    """2x2 representation with metric diag(1, -1, -1)."""

    gamma0: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray

    @property
    def beta(self) -> np.ndarray:
        return self.gamma0

    @property
    def alpha1(self) -> np.ndarray:
        return self.gamma0 @ self.gamma1

    @property
    def alpha2(self) -> np.ndarray:
        return self.gamma0 @ self.gamma2

    @property
    def gammas(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.gamma0, self.gamma1, self.gamma2)


DIRAC = DiracMatrices(
    gamma0=np.array([[1, 0], [0, -1]], dtype=complex),
    gamma1=np.array([[0, 1], [-1, 0]], dtype=complex),
    gamma2=np.array([[0, -1j], [-1j, 0]], dtype=complex),
)
BETA = DIRAC.beta
ALPHA1 = DIRAC.alpha1
ALPHA2 = DIRAC.alpha2
METRIC = np.diag([1.0, -1.0, -1.0])


def clifford_defects(d: DiracMatrices = DIRAC) -> dict[str, float]:
    """Max entrywise defect of the anticommutation relations."""
    g = d.gammas
    gam = max(
        np.abs(g[a] @ g[b] + g[b] @ g[a] - 2 * METRIC[a, b] * I2).max()
        for a in range(3)
        for b in range(3)
    )
    al = (d.alpha1, d.alpha2)
    alp = max(
        np.abs(al[j] @ al[k] + al[k] @ al[j] - 2 * (j == k) * I2).max()
        for j in range(2)
        for k in range(2)
    )
    ab = max(np.abs(a @ d.beta + d.beta @ a).max() for a in al)
    return {"gamma": float(gam), "alpha": float(alp), "alpha_beta": float(ab)}


@dataclass(frozen=True)
class SpinorField:
    """Two-component field; ``values`` has shape (2, n, n)."""

    values: np.ndarray
    grid: GridSpec
    representation: str = PHYSICAL

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        n = self.grid.n_points
        if v.shape != (2, n, n):
            raise SpectralError(f"spinor values must have shape (2, {n}, {n}), got {v.shape}")
        if self.representation not in (PHYSICAL, FREQUENCY):
            raise SpectralError(f"unknown representation {self.representation!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_components(cls, a: ScalarField, b: ScalarField) -> "SpinorField":
        if a.grid != b.grid:
            raise SpectralError("components must share a grid")
        b = b.to_frequency() if a.representation == FREQUENCY else b.to_physical()
        return cls(np.stack([a.values, b.values]), a.grid, a.representation)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "SpinorField":
        n = grid.n_points
        return cls(np.zeros((2, n, n), dtype=complex), grid)

    @property
    def components(self) -> tuple[ScalarField, ScalarField]:
        return (
            ScalarField(self.values[0], self.grid, self.representation),
            ScalarField(self.values[1], self.grid, self.representation),
        )

    def to_frequency(self) -> "SpinorField":
        if self.representation == FREQUENCY:
            return self
        return SpinorField(np.fft.fft2(self.values), self.grid, FREQUENCY)

    def to_physical(self) -> "SpinorField":
        if self.representation == PHYSICAL:
            return self
        return SpinorField(np.fft.ifft2(self.values), self.grid, PHYSICAL)

    def with_values(self, values) -> "SpinorField":
        return replace(self, values=values)

    def _other(self, other: "SpinorField") -> np.ndarray:
        o = other.to_frequency() if self.representation == FREQUENCY else other.to_physical()
        return o.values

    def __add__(self, other):
        return self.with_values(self.values + self._other(other))

    def __sub__(self, other):
        return self.with_values(self.values - self._other(other))

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def l2(self) -> float:
        p = self.to_physical().values
        return float(np.sqrt(self.grid.dx ** 2 * np.sum(np.abs(p) ** 2)))


def dirac_symbol(xi) -> np.ndarray:
    """xi . alpha + beta, batched over the leading axes of ``xi``."""
    xi = np.asarray(xi, dtype=float)
    return xi[..., 0, None, None] * ALPHA1 + xi[..., 1, None, None] * ALPHA2 + BETA


def projection_symbol(xi, sign: int) -> np.ndarray:
    """Projection matrix onto the branch ``sign`` at frequency ``xi``.

    Accepts a single 2-vector or an array with last axis 2; returns
    matrices with two trailing axes.
    """
    _check_sign(sign)
    xi = np.asarray(xi, dtype=float)
    br = np.sqrt(1.0 + np.sum(xi ** 2, axis=-1))[..., None, None]
    return 0.5 * (I2 - sign * dirac_symbol(xi) / br)


def _lattice_xi(grid: GridSpec) -> np.ndarray:
    k1, k2 = grid.freq_mesh()
    return np.stack([k1, k2], axis=-1)


def apply_matrix_symbol(psi: SpinorField, sym: np.ndarray) -> SpinorField:
    """Apply a lattice field of 2x2 matrices (shape (n, n, 2, 2)) in frequency."""
    fh = psi.to_frequency().values
    out = np.einsum("ijab,bij->aij", sym, fh) * psi.grid.nyquist_mask()
    res = SpinorField(out, psi.grid, FREQUENCY)
    return res if psi.representation == FREQUENCY else res.to_physical()


def apply_projection(psi: SpinorField, sign: int) -> SpinorField:
    return apply_matrix_symbol(psi, projection_symbol(_lattice_xi(psi.grid), sign))


def apply_constant_matrix(psi: SpinorField, m: np.ndarray) -> SpinorField:
    return psi.with_values(np.einsum("ab,bij->aij", m, psi.values))


def apply_scalar_symbol(psi: SpinorField, sym: np.ndarray) -> SpinorField:
    fh = psi.to_frequency().values * sym * psi.grid.nyquist_mask()
    res = SpinorField(fh, psi.grid, FREQUENCY)
    return res if psi.representation == FREQUENCY else res.to_physical()


def dirac_operator(psi: SpinorField) -> SpinorField:
    """-i(alpha . grad + i beta) psi, via spectral derivatives."""
    k1, k2 = psi.grid.freq_mesh()
    d1 = apply_scalar_symbol(psi, 1j * k1)
    d2 = apply_scalar_symbol(psi, 1j * k2)
    p = psi.representation
    terms = (
        apply_constant_matrix(d1, ALPHA1).values
        + apply_constant_matrix(d2, ALPHA2).values
        + 1j * apply_constant_matrix(psi, BETA).values
    )
    return SpinorField(-1j * terms, psi.grid, p)


def operator_split_residual(psi: SpinorField) -> float:
    """Relative L^2 mismatch between the Dirac operator and <D>(P_- - P_+)."""
    lhs = dirac_operator(psi)
    diff = apply_projection(psi, -1) - apply_projection(psi, 1)
    rhs = apply_scalar_symbol(diff, symbol_on_lattice(psi.grid, BracketSymbol()))
    num = (lhs - rhs).l2()
    den = lhs.l2()
    if den == 0:
        return float(num)
    return float(num / den)


def beta_commutation_residual(xi, sign: int):
    """Frobenius norm of P_s(xi) beta - beta (P_{-s}(xi) - s beta / <xi>)."""
    xi = np.asarray(xi, dtype=float)
    br = np.sqrt(1.0 + np.sum(xi ** 2, axis=-1))[..., None, None]
    lhs = projection_symbol(xi, sign) @ BETA
    rhs = BETA @ (projection_symbol(xi, -sign) - sign * BETA / br)
    out = np.sqrt(np.sum(np.abs(lhs - rhs) ** 2, axis=(-2, -1)))
    return float(out) if out.ndim == 0 else out


def spectral_norm_2x2(m: np.ndarray):
    """Largest singular value of 2x2 matrices in closed form."""
    fro2 = np.sum(np.abs(m) ** 2, axis=(-2, -1))
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    disc = np.sqrt(np.maximum(fro2 ** 2 - 4 * np.abs(det) ** 2, 0.0))
    return np.sqrt((fro2 + disc) / 2)


def angle_between(u, v):
    """Unsigned angle in [0, pi] via atan2 of cross and dot products."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    cross = u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]
    dot = np.sum(u * v, axis=-1)
    return np.abs(np.arctan2(cross, dot))


def null_form_gain(xi, eta, s1: int, s2: int):
    """Operator norm of P_{s1}(xi) P_{s2}(eta) and the angle-plus-bracket bound.

    Mixed signs use the angle between xi and eta, equal signs the angle
    between -xi and eta.

    Returns
    -------
    observed, bound : float or ndarray
    """
    _check_sign(s1)
    _check_sign(s2)
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if np.any(np.all(xi == 0, axis=-1)) or np.any(np.all(eta == 0, axis=-1)):
        raise SpectralError("null_form_gain needs nonzero frequencies")
    prod = projection_symbol(xi, s1) @ projection_symbol(eta, s2)
    observed = spectral_norm_2x2(prod)
    ang = angle_between(xi if s1 != s2 else -xi, eta)
    bound = (
        ang
        + 1.0 / np.sqrt(1 + np.sum(xi ** 2, axis=-1))
        + 1.0 / np.sqrt(1 + np.sum(eta ** 2, axis=-1))
    )
    if observed.ndim == 0:
        return float(observed), float(bound)
    return observed, bound


def dealias_mask(grid: GridSpec) -> np.ndarray:
    k1, k2 = grid.freq_mesh()
    return (np.hypot(k1, k2) <= grid.dealias_radius) & grid.nyquist_mask()


def dealias(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """2/3-rule truncation of physical samples (leading axes allowed)."""
    return np.fft.ifft2(np.fft.fft2(values) * dealias_mask(grid))


def beta_density(values: np.ndarray) -> np.ndarray:
    """Pointwise C^2 inner product <psi, beta psi> of physical samples."""
    return np.einsum("aij,ab,bij->ij", np.conj(values), BETA, values)


def cubic_term(values: np.ndarray) -> np.ndarray:
    """<psi, beta psi> beta psi on physical samples, without dealiasing."""
    dens = beta_density(values)
    return dens[None] * np.einsum("ab,bij->aij", BETA, values)


def nonlinearity(psi: SpinorField, dealiased: bool = True) -> SpinorField:
    if psi.representation != PHYSICAL:
        raise SpectralError("nonlinearity needs the physical representation")
    out = cubic_term(psi.values)
    if dealiased:
        out = dealias(out, psi.grid)
    return SpinorField(out, psi.grid, PHYSICAL)


def random_spinor(grid: GridSpec, rng: np.random.Generator, band=None) -> SpinorField:
    n = grid.n_points
    c = rng.standard_normal((2, n, n)) + 1j * rng.standard_normal((2, n, n))
    k1, k2 = grid.freq_mesh()
    radius = grid.dealias_radius if band is None else band
    c = c * ((np.hypot(k1, k2) <= radius) & grid.nyquist_mask())
    return SpinorField(c, grid, FREQUENCY).to_physical()


def _check_sign(sign: int) -> None:
    if sign not in (1, -1):
        raise SpectralError(f"sign must be +1 or -1, got {sign}")


def null_form_sweep(n_pairs: int = 10_000, seed: int = 0, lo: int = 4, hi: int = 12):
    """Fit C in ||P_{s1}(xi) P_{s2}(eta)|| <= C (angle + <xi>^-1 + <eta>^-1).

    |xi| and |eta| are log-uniform in [2^lo, 2^hi], the relevant angle is
    log-uniform in [2^(-hi-2), pi] and the signs are random. C is fitted as
    the largest observed / bound, globally and per octave of |xi|.

    Returns
    -------
    dict with keys ``C``, ``octaves`` (lower exponent -> C) and ``spread``
    (largest over smallest octave constant).
    """
    rng = np.random.Generator(np.random.Philox(seed))
    rx = 2.0 ** rng.uniform(lo, hi, n_pairs)
    ry = 2.0 ** rng.uniform(lo, hi, n_pairs)
    s1 = rng.choice([-1, 1], n_pairs)
    s2 = rng.choice([-1, 1], n_pairs)
    ang = np.exp(rng.uniform(math.log(2.0 ** (-hi - 2)), math.log(math.pi), n_pairs))
    ang *= rng.choice([-1, 1], n_pairs)
    base = rng.uniform(0, 2 * math.pi, n_pairs)
    xi = rx[:, None] * np.stack([np.cos(base), np.sin(base)], axis=1)
    # equal signs pair -xi with eta
    ref = base + np.where(s1 == s2, math.pi, 0.0) + ang
    eta = ry[:, None] * np.stack([np.cos(ref), np.sin(ref)], axis=1)
    ratio = np.empty(n_pairs)
    for a in (-1, 1):
        for b in (-1, 1):
            sel = (s1 == a) & (s2 == b)
            if sel.any():
                obs, bound = null_form_gain(xi[sel], eta[sel], a, b)
                ratio[sel] = obs / bound
    octave = np.floor(np.log2(rx)).astype(int)
    per = {int(o): float(ratio[octave == o].max()) for o in np.unique(octave)}
    vals = list(per.values())
    return {"C": float(ratio.max()), "octaves": per, "spread": max(vals) / min(vals)}


def algebra_checks(n_xi: int = 1_000_000, n_fields: int = 100, grid: GridSpec = None, seed: int = 0, batch: int = 100_000) -> dict[str, float]:
    """Worst defects of the matrix identities over sampled frequencies and random fields.

    Frequencies have log-uniform modulus in [2^-6, 2^12] and uniform
    direction. Returned keys: the Clifford defects, ``idempotent``,
    ``hermitian``, ``resolution``, ``orthogonal``, ``beta_commutation``
    and ``operator_split`` (relative, over ``n_fields`` random spinors).
    """
    grid = GridSpec(n_points=64) if grid is None else grid
    rng = np.random.Generator(np.random.Philox(seed))
    out = dict(clifford_defects())
    worst = {"idempotent": 0.0, "hermitian": 0.0, "resolution": 0.0, "orthogonal": 0.0, "beta_commutation": 0.0}
    done = 0
    while done < n_xi:
        m = min(batch, n_xi - done)
        r = 2.0 ** rng.uniform(-6, 12, m)
        a = rng.uniform(0, 2 * math.pi, m)
        xi = r[:, None] * np.stack([np.cos(a), np.sin(a)], axis=1)
        pp = projection_symbol(xi, 1)
        pm = projection_symbol(xi, -1)
        for p in (pp, pm):
            worst["idempotent"] = max(worst["idempotent"], float(np.abs(p @ p - p).max()))
            worst["hermitian"] = max(worst["hermitian"], float(np.abs(p - np.conj(np.swapaxes(p, -1, -2))).max()))
        worst["resolution"] = max(worst["resolution"], float(np.abs(pp + pm - I2).max()))
        worst["orthogonal"] = max(worst["orthogonal"], float(np.abs(pp @ pm).max()))
        for s in (1, -1):
            worst["beta_commutation"] = max(worst["beta_commutation"], float(np.max(beta_commutation_residual(xi, s))))
        done += m
    out.update(worst)
    out["operator_split"] = max(operator_split_residual(random_spinor(grid, rng)) for _ in range(n_fields))
    return out
