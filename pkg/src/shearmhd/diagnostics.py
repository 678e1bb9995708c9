"""Weighted energies, symbol bounds and frequency-region bookkeeping."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import astuple, dataclass, fields

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import minimize_scalar

from .nonlinear_solver import SimState
from .spectral_core import (GridSpec, l2_norm_sq, m_decay_rate, sobolev_norm,
                            split_average, symbol_AN, symbol_AN_mu)

__all__ = [
    "EnergyReport", "energy_report", "write_reports_csv", "REPORT_COLUMNS",
    "damping_symbol", "damping_symbol_sup", "damping_symbol_argmax",
    "lmu_profile", "lmu_sup_constant", "lmu_sup_argmax",
    "RegionTag", "classify_region",
    "DissipationIntegrals", "dissipation_time_integrals", "fluctuation_norms",
]


@dataclass(frozen=True)
class EnergyReport:
    t: float
    hn_p1: float
    hn_p2: float
    lf_p1: float
    lf_p2: float
    diss_p1: float
    diss_p2: float
    mdot_p1: float
    mdot_p2: float
    cross_E: float
    avg_b_norm: float


REPORT_COLUMNS = tuple(f.name for f in fields(EnergyReport))


def _cross_energy(state: SimState) -> float:
    """Lattice sum of the per-mode energy with the shifted-time cross term."""
    g = state.grid
    p1, p2 = state.p1.coeffs, state.p2.coeffs
    base = np.abs(p1) ** 2 + np.abs(p2) ** 2
    alpha = state.params.alpha
    if alpha == 0.0:
        return g.dxi * float(np.sum(base))
    k = np.broadcast_to(g.k, g.shape)
    xi = np.broadcast_to(g.xi, g.shape)
    s = np.zeros(g.shape)
    nz = k != 0
    s[nz] = state.t - xi[nz] / k[nz]
    cross = (s / (1.0 + s * s)) * (p1 * np.conj(p2) / (1j * alpha)).real
    return g.dxi * float(np.sum(base + cross))


def energy_report(state: SimState) -> EnergyReport:
    g, prm, t = state.grid, state.params, state.t
    a_hi = symbol_AN(g, t, prm.n_high)
    a_lo = symbol_AN_mu(g, t, prm)
    w1 = a_hi * state.p1.coeffs
    w2 = a_hi * state.p2.coeffs
    eta = g.xi - g.k * t
    grad2 = g.k ** 2 + eta ** 2
    mdot = m_decay_rate(t, g.k, g.xi)
    avg_p2, _ = split_average(state.p2)
    return EnergyReport(
        t=float(t),
        hn_p1=math.sqrt(l2_norm_sq(w1, g)),
        hn_p2=math.sqrt(l2_norm_sq(w2, g)),
        lf_p1=math.sqrt(l2_norm_sq(a_lo * state.p1.coeffs, g)),
        lf_p2=math.sqrt(l2_norm_sq(a_lo * state.p2.coeffs, g)),
        diss_p1=g.dxi * float(np.sum(grad2 * np.abs(w1) ** 2)),
        diss_p2=g.dxi * float(np.sum(g.k ** 2 * np.abs(w2) ** 2)),
        mdot_p1=g.dxi * float(np.sum(mdot * np.abs(w1) ** 2)),
        mdot_p2=g.dxi * float(np.sum(mdot * np.abs(w2) ** 2)),
        cross_E=_cross_energy(state),
        # on k = 0 the magnetic field is (i xi p2 / |xi|, 0), so |b| = |p2|
        avg_b_norm=sobolev_norm(avg_p2, prm.n_high),
    )


def write_reports_csv(path, reports):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for rep in reports:
            writer.writerow([repr(float(v)) for v in astuple(rep)])


# -- symbol bounds ----------------------------------------------------------

def damping_symbol(t, k, xi):
    """``k^2 / (sqrt(k^2 + (xi - k t)^2) sqrt(k^2 + xi^2))``."""
    k = np.asarray(k, float)
    xi = np.asarray(xi, float)
    return k * k / (np.sqrt(k * k + (xi - k * t) ** 2) * np.sqrt(k * k + xi * xi))


def damping_symbol_argmax(t, grid: GridSpec):
    """``(k, xi, value)`` of the largest symbol over lattice modes ``k != 0``."""
    k = np.broadcast_to(grid.k, grid.shape)
    xi = np.broadcast_to(grid.xi, grid.shape)
    vals = np.where(k != 0, damping_symbol(t, np.where(k != 0, k, 1.0), xi), -np.inf)
    i, j = np.unravel_index(np.argmax(vals), vals.shape)
    return int(k[i, j]), float(xi[i, j]), float(vals[i, j])


def damping_symbol_sup(t, grid: GridSpec) -> float:
    """``t`` times the lattice sup of :func:`damping_symbol` over ``k != 0``."""
    if not t > 0:
        raise ValueError("t must be positive")
    if grid.k_max == 0:
        raise ValueError("lattice has no k != 0 modes")
    return t * damping_symbol_argmax(t, grid)[2]


def lmu_profile(s):
    s = np.asarray(s, float)
    return (2.0 + s * s) * s / (1.0 + s * s) ** 1.5


def lmu_sup_argmax(lo=0.0, hi=100.0, xtol=1e-10):
    """Maximizer and maximum of :func:`lmu_profile` on ``[lo, hi]``.

    A coarse scan brackets the peak, then a bounded Brent search refines it.
    """
    grid_s = np.linspace(lo, hi, 20001)
    vals = lmu_profile(grid_s)
    i = int(np.argmax(vals))
    a = grid_s[max(i - 1, 0)]
    b = grid_s[min(i + 1, grid_s.size - 1)]
    res = minimize_scalar(lambda s: -float(lmu_profile(s)), bounds=(a, b),
                          method="bounded", options={"xatol": xtol})
    return float(res.x), float(-res.fun)


def lmu_sup_constant() -> float:
    return lmu_sup_argmax()[1]


# -- frequency regions ------------------------------------------------------

class RegionTag(enum.Enum):
    TRANSPORT = "Transport"
    REACTION = "Reaction"
    REMAINDER = "Remainder"


def classify_region(kxi, leta) -> RegionTag:
    """Tag the interaction of output mode ``(k, xi)`` with input mode ``(l, eta)``.

    Transport when the difference is small against ``(l, eta)``, Reaction when
    ``(l, eta)`` is small against the difference, both with ratio 1/8; equality
    falls to Remainder.
    """
    k, xi = kxi
    l, eta = leta
    diff = math.hypot(k - l, xi - eta)
    inp = math.hypot(l, eta)
    if 8.0 * diff < inp:
        return RegionTag.TRANSPORT
    if 8.0 * inp < diff:
        return RegionTag.REACTION
    return RegionTag.REMAINDER


# -- time integrals ---------------------------------------------------------

@dataclass(frozen=True)
class DissipationIntegrals:
    t_span: float
    diss_p1: float
    diss_p2: float
    mdot_p1: float
    mdot_p2: float
    fluct_p1: float
    fluct_p2: float

    def scaled(self, mu, eps) -> dict:
        """Each integral divided by ``eps^2 / mu``; zero integrals stay zero."""
        ref = eps * eps / mu if mu > 0 else math.inf
        out = {}
        for name in ("diss_p1", "diss_p2", "mdot_p1", "mdot_p2", "fluct_p1", "fluct_p2"):
            val = getattr(self, name)
            out[name] = val / ref if ref > 0 else (0.0 if val == 0 else math.inf)
        return out


def dissipation_time_integrals(reports, fluct=None) -> DissipationIntegrals:
    """Trapezoid integrals of the dissipation and ``-dM/M`` series.

    ``fluct`` optionally holds ``(||A p1_neq||^2, ||A p2_neq||^2)`` per report;
    without it those integrals are zero.
    """
    reports = list(reports)
    if not reports:
        return DissipationIntegrals(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    t = np.array([r.t for r in reports])
    if np.any(np.diff(t) <= 0):
        raise ValueError("report times must be strictly increasing")

    def integ(vals):
        return float(trapezoid(np.asarray(vals, float), t)) if t.size > 1 else 0.0

    f1 = f2 = 0.0
    if fluct is not None:
        fl = np.asarray(fluct, float)
        f1, f2 = integ(fl[:, 0]), integ(fl[:, 1])
    return DissipationIntegrals(
        t_span=float(t[-1] - t[0]),
        diss_p1=integ([r.diss_p1 for r in reports]),
        diss_p2=integ([r.diss_p2 for r in reports]),
        mdot_p1=integ([r.mdot_p1 for r in reports]),
        mdot_p2=integ([r.mdot_p2 for r in reports]),
        fluct_p1=f1,
        fluct_p2=f2,
    )


def fluctuation_norms(state: SimState):
    """``(||A^N p1_neq||^2, ||A^N p2_neq||^2)`` at ``state.t``."""
    g, prm = state.grid, state.params
    a_hi = symbol_AN(g, state.t, prm.n_high)
    out = []
    for fld in (state.p1, state.p2):
        _, neq = split_average(fld)
        out.append(l2_norm_sq(a_hi * neq.coeffs, g))
    return tuple(out)
