"""Lattice, shear-frame symbols and Fourier weights.

Fields live on a truncated lattice ``(k, xi)`` with integer horizontal modes
``k in {-K..K}`` and vertical frequencies ``xi = (2 pi / L) * {-Xi..Xi}``.
Coefficient arrays are stored centred: row ``i`` holds ``k = i - K`` and
column ``j`` holds ``xi = (j - Xi) * dxi``.

Coefficient convention: a coefficient ``f_hat`` relates to the Fourier-series
coefficient ``c`` of the physical field on ``[0, 2 pi) x [0, L)`` by
``f_hat = L * c``.  With the lattice measure ``dxi = 2 pi / L`` this makes
``sqrt(dxi * sum |f_hat|^2)`` the physical L^2 norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

C_RATE_MAX = 0.5 * (1.0 - math.sqrt(2.0 / 3.0))


@dataclass(frozen=True)
class PhysParams:
    """Physical and weight parameters.

    Attributes:
        alpha: background magnetic field strength.
        nu_x, nu_y: horizontal / vertical viscosity.
        kappa_x, kappa_y: horizontal / vertical resistivity.
        mu: dissipation scale entering the low-frequency weight.
        n_high: Sobolev index N.
        n_low: Sobolev index N' of the low-frequency weight.
        c_rate: exponential rate c of the low-frequency weight.
    """

    alpha: float = 1.0
    nu_x: float = 0.0
    nu_y: float = 0.0
    kappa_x: float = 0.0
    kappa_y: float = 0.0
    mu: float = 0.0
    n_high: int = 6
    n_low: float = 4.0
    c_rate: float = 0.04

    def __post_init__(self):
        for name in ("nu_x", "nu_y", "kappa_x", "kappa_y", "mu"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
        if not math.isfinite(self.alpha):
            raise ValueError("alpha must be finite")
        if int(self.n_high) != self.n_high or self.n_high < 6:
            raise ValueError(f"n_high must be an integer >= 6, got {self.n_high!r}")
        if not (3.0 < self.n_low <= self.n_high - 2):
            raise ValueError(
                f"n_low must satisfy 3 < n_low <= n_high - 2, got {self.n_low!r}")
        if not (0.0 < self.c_rate < C_RATE_MAX):
            raise ValueError(
                f"c_rate must lie in (0, {C_RATE_MAX:.6f}), got {self.c_rate!r}")

    @classmethod
    def horizontal_resistivity(cls, mu, alpha=1.0, **kw):
        """nu_x = nu_y = kappa_x = mu, kappa_y = 0."""
        return cls(alpha=alpha, nu_x=mu, nu_y=mu, kappa_x=mu, kappa_y=0.0, mu=mu, **kw)

    @classmethod
    def non_resistive(cls, nu, alpha=1.0, **kw):
        return cls(alpha=alpha, nu_x=nu, nu_y=nu, kappa_x=0.0, kappa_y=0.0, mu=nu, **kw)

    @property
    def resistive(self) -> bool:
        return self.kappa_x > 0.0 or self.kappa_y > 0.0


@dataclass(frozen=True)
class GridSpec:
    """Truncated ``(k, xi)`` lattice.

    ``n_kx`` and ``n_ky`` count lattice points in each direction and must be
    odd; ``len_y`` is the vertical period standing in for the real line.
    """

    n_kx: int = 33
    n_ky: int = 129
    len_y: float = 32.0 * math.pi
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        for name in ("n_kx", "n_ky"):
            n = getattr(self, name)
            if int(n) != n or n < 1 or n % 2 == 0:
                raise ValueError(f"{name} must be a positive odd integer, got {n!r}")
        if not (self.len_y > 0.0 and math.isfinite(self.len_y)):
            raise ValueError(f"len_y must be positive, got {self.len_y!r}")
        if not (0.0 < self.dealias_fraction <= 1.0):
            raise ValueError("dealias_fraction must lie in (0, 1]")

    @property
    def k_max(self) -> int:
        return (self.n_kx - 1) // 2

    @property
    def xi_index_max(self) -> int:
        return (self.n_ky - 1) // 2

    @property
    def dxi(self) -> float:
        return 2.0 * math.pi / self.len_y

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_kx, self.n_ky)

    @cached_property
    def k(self) -> np.ndarray:
        """Horizontal modes as a column ``(n_kx, 1)``."""
        return np.arange(-self.k_max, self.k_max + 1, dtype=float)[:, None]

    @cached_property
    def xi(self) -> np.ndarray:
        """Vertical frequencies as a row ``(1, n_ky)``."""
        j = np.arange(-self.xi_index_max, self.xi_index_max + 1, dtype=float)
        return (j * self.dxi)[None, :]

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        kk = np.abs(np.arange(-self.k_max, self.k_max + 1))[:, None]
        jj = np.abs(np.arange(-self.xi_index_max, self.xi_index_max + 1))[None, :]
        keep_k = kk <= self.dealias_fraction * self.k_max + 1e-12
        keep_j = jj <= self.dealias_fraction * self.xi_index_max + 1e-12
        return keep_k & keep_j

    @property
    def k_retained(self) -> int:
        return int(math.floor(self.dealias_fraction * self.k_max + 1e-12))

    @property
    def xi_retained(self) -> float:
        return math.floor(self.dealias_fraction * self.xi_index_max + 1e-12) * self.dxi

    def index(self, k: int, xi: float) -> tuple[int, int]:
        """Array index of lattice point ``(k, xi)``; ``xi`` is rounded to the lattice."""
        j = int(round(xi / self.dxi))
        if abs(k) > self.k_max or abs(j) > self.xi_index_max:
            raise IndexError(f"mode ({k}, {xi}) outside the lattice")
        return k + self.k_max, j + self.xi_index_max

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape, dtype=complex)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Complex coefficients of one scalar unknown on a :class:`GridSpec` lattice."""

    coeffs: np.ndarray
    grid: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != self.grid.shape:
            raise ValueError(f"coefficient shape {c.shape} != lattice {self.grid.shape}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "SpectralField":
        return cls(grid.zeros(), grid)

    @classmethod
    def point_mass(cls, grid: GridSpec, k: int, xi: float, amplitude=1.0) -> "SpectralField":
        c = grid.zeros()
        c[grid.index(k, xi)] = amplitude
        return cls(c, grid)

    def with_coeffs(self, coeffs) -> "SpectralField":
        return SpectralField(coeffs, self.grid)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return self.with_coeffs(self.coeffs - other.coeffs)

    def mirrored(self) -> np.ndarray:
        """``conj(coeff(-k, -xi))`` on the same layout."""
        return np.conj(self.coeffs[::-1, ::-1])

    def is_real(self, tol=1e-12) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.coeffs), initial=0.0)))
        return bool(np.max(np.abs(self.coeffs - self.mirrored()), initial=0.0) <= tol * scale)

    def realified(self) -> "SpectralField":
        return self.with_coeffs(0.5 * (self.coeffs + self.mirrored()))


@dataclass(frozen=True, eq=False)
class ShearSymbols:
    """Shear-frame symbols at time ``t`` on a lattice.

    ``kxt`` is the symbol of ``d_y - t d_x`` divided by ``i``, i.e. ``xi - k t``.
    """

    t: float
    kxt: np.ndarray
    lam_t: np.ndarray
    lap_t: np.ndarray

    @classmethod
    def at(cls, grid: GridSpec, t: float) -> "ShearSymbols":
        kxt = grid.xi - grid.k * t
        lam2 = grid.k ** 2 + kxt ** 2
        return cls(t=t, kxt=kxt, lam_t=np.sqrt(lam2), lap_t=-lam2)


def bracket(k, xi):
    """Japanese bracket ``(1 + k^2 + xi^2)^(1/2)``."""
    return np.sqrt(1.0 + np.square(k) + np.square(xi))


def multiplier_M(t, k, xi):
    """Closed form of the time-dependent weight ``M(t, k, xi)``.

    ``M = exp(-(1/|k|) [atan(xi/k) - atan((xi - k t)/k)])`` for ``k != 0`` and
    ``M = 1`` on ``k = 0``.  Broadcasts over array inputs.
    """
    t, k, xi = np.broadcast_arrays(np.asarray(t, float), np.asarray(k, float),
                                   np.asarray(xi, float))
    out = np.ones(t.shape)
    nz = k != 0
    if np.any(nz):
        kk, xx, tt = k[nz], xi[nz], t[nz]
        phase = np.arctan(xx / kk) - np.arctan((xx - kk * tt) / kk)
        out[nz] = np.exp(-phase / np.abs(kk))
    return out if out.ndim else float(out)


def m_decay_rate(t, k, xi):
    """``-dM/dt / M = |k| / (k^2 + (xi - k t)^2)``, zero on ``k = 0``."""
    t, k, xi = np.broadcast_arrays(np.asarray(t, float), np.asarray(k, float),
                                   np.asarray(xi, float))
    out = np.zeros(t.shape)
    nz = k != 0
    out[nz] = np.abs(k[nz]) / (k[nz] ** 2 + (xi[nz] - k[nz] * t[nz]) ** 2)
    return out if out.ndim else float(out)


def symbol_AN(grid: GridSpec, t, n):
    return multiplier_M(t, grid.k, grid.xi) * bracket(grid.k, grid.xi) ** n


def symbol_AN_mu(grid: GridSpec, t, params: PhysParams):
    growth = np.where(grid.k != 0, math.exp(params.c_rate * params.mu * t), 1.0)
    return symbol_AN(grid, t, params.n_low) * growth


def weight_AN(fld: SpectralField, t, n) -> SpectralField:
    """Apply ``A^N = M <grad>^N`` with exponent ``n``."""
    if n < 0:
        raise ValueError("Sobolev index must be >= 0")
    return fld.with_coeffs(fld.coeffs * symbol_AN(fld.grid, t, n))


def weight_AN_mu(fld: SpectralField, t, params: PhysParams) -> SpectralField:
    """Apply ``A^{N'}_mu = M <grad>^{N'} exp(c mu t 1_{k != 0})``."""
    return fld.with_coeffs(fld.coeffs * symbol_AN_mu(fld.grid, t, params))


def l2_norm_sq(coeffs, grid: GridSpec) -> float:
    return grid.dxi * float(np.sum(np.abs(coeffs) ** 2))


def sobolev_norm(fld: SpectralField, n) -> float:
    """H^n norm with the lattice measure ``2 pi / L`` per xi step."""
    w = bracket(fld.grid.k, fld.grid.xi) ** n
    return math.sqrt(l2_norm_sq(fld.coeffs * w, fld.grid))


def dealias(fld: SpectralField) -> SpectralField:
    return fld.with_coeffs(np.where(fld.grid.dealias_mask, fld.coeffs, 0.0))


def split_average(fld: SpectralField) -> tuple[SpectralField, SpectralField]:
    """Split into the x-average (``k = 0`` row) and its complement."""
    avg = fld.grid.zeros()
    row = fld.grid.k_max
    avg[row] = fld.coeffs[row]
    return fld.with_coeffs(avg), fld.with_coeffs(fld.coeffs - avg)
