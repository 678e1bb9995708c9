"""Per-mode linear dynamics of ``(p1, p2)`` in the shear frame.

For a fixed lattice point ``(k, xi)`` the linearised system is the 2x2 ODE

    dp1/dt =  a(t) p1 + i alpha k p2 - d1(t) p1
    dp2/dt = -a(t) p2 + i alpha k p1 - d2(t) p2

with shear coefficient ``a = k (xi - k t) / (k^2 + (xi - k t)^2)``,
``d1 = nu_x k^2 + nu_y (xi - k t)^2`` and ``d2 = kappa_x k^2 + kappa_y (xi - k t)^2``
(``d2 = 0`` in the non-resistive case).

The dissipation ``d1`` grows like ``t^2`` and slaves ``p1`` to ``p2`` once
``d1 >> alpha |k|``, so the integrator is an exponential (fourth-order Magnus)
scheme rather than an explicit Runge-Kutta method: each step applies the exact
exponential of a 2x2 matrix, which stays accurate when ``d1 * h >> 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spectral_core import GridSpec, PhysParams, SpectralField, bracket, sobolev_norm


class StiffnessError(ArithmeticError):
    """Step size fell below the floor during adaptive integration."""

    def __init__(self, t, h):
        super().__init__(f"step size underflow at t={t:.6g} (h={h:.3g})")
        self.t = t
        self.h = h


class WindowOffGridError(ValueError):
    """The instability window holds no interior lattice point."""

    def __init__(self, lo, hi, grid: GridSpec):
        need_n_ky = 2 * math.ceil(hi / grid.dxi) + 1
        max_len_y = 2.0 * math.pi * grid.xi_index_max / hi
        super().__init__(
            f"instability window [{lo:.4g}, {hi:.4g}] not resolved by the lattice "
            f"(xi_max={grid.xi_index_max * grid.dxi:.4g}, dxi={grid.dxi:.4g}); "
            f"need len_y <= {max_len_y:.4g} at n_ky={grid.n_ky}, "
            f"or n_ky >= {need_n_ky} at len_y={grid.len_y:.4g}")
        self.lo, self.hi = lo, hi
        self.required_len_y = max_len_y
        self.required_n_ky = need_n_ky


@dataclass(frozen=True)
class ModeState:
    k: int
    xi: float
    p1: complex
    p2: complex
    t: float = 0.0


@dataclass
class ModeTrajectory:
    """Accepted-step samples of one mode."""

    t: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    params: PhysParams
    k: int
    xi: float

    @property
    def samples(self):
        return list(zip(self.t.tolist(), self.p1.tolist(), self.p2.tolist()))

    @property
    def amplitude(self) -> np.ndarray:
        return np.sqrt(np.abs(self.p1) ** 2 + np.abs(self.p2) ** 2)


@dataclass
class ModeBatch:
    """Trajectories of many modes on a shared time grid.

    ``p1`` and ``p2`` have shape ``(n_times, n_modes)``.  ``dxi`` is the
    lattice measure used by :meth:`norm`.
    """

    t: np.ndarray
    k: np.ndarray
    xi: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    params: PhysParams
    resistive: bool = True
    dxi: float = 1.0
    n_rejected: int = 0

    def norm(self, n) -> np.ndarray:
        """``||p(t)||_{H^n}`` summed over the batch."""
        w = bracket(self.k, self.xi) ** (2 * n)
        e = (np.abs(self.p1) ** 2 + np.abs(self.p2) ** 2) * w[None, :]
        return np.sqrt(self.dxi * e.sum(axis=1))

    def mode(self, i) -> ModeTrajectory:
        return ModeTrajectory(self.t, self.p1[:, i], self.p2[:, i], self.params,
                              int(self.k[i]), float(self.xi[i]))


def shear_coefficient(t, k, xi):
    """``k (xi - k t) / (k^2 + (xi - k t)^2)``; zero where ``k = 0``."""
    k = np.asarray(k, float)
    eta = np.asarray(xi, float) - k * t
    lam2 = k * k + eta * eta
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(k != 0, k * eta / np.where(lam2 > 0, lam2, 1.0), 0.0)
    return a


def dissipation_rates(t, k, xi, params: PhysParams, resistive=True):
    k = np.asarray(k, float)
    eta = np.asarray(xi, float) - k * t
    d1 = params.nu_x * k * k + params.nu_y * eta * eta
    if resistive:
        d2 = params.kappa_x * k * k + params.kappa_y * eta * eta
    else:
        d2 = np.zeros_like(d1)
    return d1, d2


def mode_matrix(t, k, xi, params: PhysParams, resistive=True) -> np.ndarray:
    """Matrix of the 2x2 system, shape ``broadcast(k, xi).shape + (2, 2)``."""
    k, xi = np.broadcast_arrays(np.asarray(k, float), np.asarray(xi, float))
    a = shear_coefficient(t, k, xi)
    d1, d2 = dissipation_rates(t, k, xi, params, resistive)
    out = np.empty(k.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = a - d1
    out[..., 0, 1] = 1j * params.alpha * k
    out[..., 1, 0] = 1j * params.alpha * k
    out[..., 1, 1] = -a - d2
    return out


def mode_rhs(state: ModeState, params: PhysParams, resistive=True):
    """Right-hand side ``(dp1, dp2)`` of the linear system at ``state.t``."""
    a = float(shear_coefficient(state.t, state.k, state.xi))
    d1, d2 = dissipation_rates(state.t, state.k, state.xi, params, resistive)
    c = 1j * params.alpha * state.k
    dp1 = (a - float(d1)) * state.p1 + c * state.p2
    dp2 = (-a - float(d2)) * state.p2 + c * state.p1
    return complex(dp1), complex(dp2)


_GAUSS = math.sqrt(3.0) / 6.0


def _expm2(o11, o12, o21, o22):
    """Exact exponential of 2x2 matrices given entrywise (vectorised)."""
    m = 0.5 * (o11 + o22)
    b = 0.5 * (o11 - o22)
    delta = np.sqrt(b * b + o12 * o21)
    ep = np.exp(m + delta)
    em = np.exp(m - delta)
    cosh_part = 0.5 * (ep + em)
    small = np.abs(delta) < 1e-2
    safe = np.where(small, 1.0, delta)
    sinhc = np.where(
        small,
        np.exp(m) * (1.0 + delta ** 2 / 6.0 + delta ** 4 / 120.0 + delta ** 6 / 5040.0),
        (ep - em) / (2.0 * safe))
    return (cosh_part + sinhc * b, sinhc * o12, sinhc * o21, cosh_part - sinhc * b)


def _magnus_stepper(k, xi, params: PhysParams, resistive):
    """Return ``step(t, h, y1, y2)`` for a fixed batch of modes.

    Fourth-order Magnus: two Gauss points and one commutator, followed by
    the exact 2x2 exponential.
    """
    k2 = k * k
    c = 1j * params.alpha * k
    nu_x, nu_y = params.nu_x, params.nu_y
    ka_x, ka_y = (params.kappa_x, params.kappa_y) if resistive else (0.0, 0.0)
    r3 = math.sqrt(3.0) / 12.0

    def diag(tq):
        eta = xi - k * tq
        eta2 = eta * eta
        a = k * eta / np.maximum(k2 + eta2, 1e-300)
        return a - nu_x * k2 - nu_y * eta2, -a - ka_x * k2 - ka_y * eta2

    def step(t, h, y1, y2):
        xa, ya = diag(t + (0.5 - _GAUSS) * h)
        xb, yb = diag(t + (0.5 + _GAUSS) * h)
        comm = (r3 * h * h) * c * ((xb - xa) - (yb - ya))
        hc = h * c
        e11, e12, e21, e22 = _expm2(0.5 * h * (xa + xb), hc + comm, hc - comm,
                                    0.5 * h * (ya + yb))
        return e11 * y1 + e12 * y2, e21 * y1 + e22 * y2

    return step


def integrate_modes(k, xi, p1, p2, t0, t_end, params: PhysParams, tol=1e-8,
                    resistive=True, max_step=0.1, atol=None, h_min=1e-12,
                    max_steps=2_000_000, dxi=1.0) -> ModeBatch:
    """Integrate a batch of independent modes on a shared adaptive time grid.

    Each attempted step of size ``h`` is compared against two steps of size
    ``h/2``; the Richardson difference estimates the local error, and the
    per-mode error ``|err| / (atol + tol * |p|)`` (maximum over modes) drives
    a PI step-size controller.  Accepted states are the two-half-step values.

    Args:
        k, xi: mode labels, 1-D arrays of equal length.
        p1, p2: initial amplitudes at ``t0``.
        tol: local relative error target per step.
        max_step: upper bound on the sample spacing.
        atol: absolute floor of the error scale; defaults to
            ``1e-14 * max |p(t0)|``.

    Raises:
        StiffnessError: if the step size drops below ``h_min``.
    """
    if not t_end > t0:
        raise ValueError("t_end must exceed the initial time")
    if tol <= 0:
        raise ValueError("tol must be positive")
    k = np.atleast_1d(np.asarray(k, float))
    xi = np.atleast_1d(np.asarray(xi, float))
    y1 = np.atleast_1d(np.asarray(p1, complex)).copy()
    y2 = np.atleast_1d(np.asarray(p2, complex)).copy()
    if atol is None:
        scale0 = float(np.max(np.sqrt(np.abs(y1) ** 2 + np.abs(y2) ** 2), initial=0.0))
        atol = 1e-14 * scale0 if scale0 > 0 else 1e-300

    step = _magnus_stepper(k, xi, params, resistive)
    ts, s1, s2 = [float(t0)], [y1.copy()], [y2.copy()]
    t = float(t0)
    h = min(max_step, 1e-2, t_end - t0)
    err_prev = 1.0
    n_rej = 0
    safety = 0.9
    for _ in range(max_steps):
        if t >= t_end:
            break
        h = min(h, t_end - t)
        f1, f2 = step(t, h, y1, y2)
        m1, m2 = step(t, 0.5 * h, y1, y2)
        g1, g2 = step(t + 0.5 * h, 0.5 * h, m1, m2)
        e = np.sqrt(np.abs(g1 - f1) ** 2 + np.abs(g2 - f2) ** 2) / 15.0
        size = np.maximum(np.sqrt(np.abs(y1) ** 2 + np.abs(y2) ** 2),
                          np.sqrt(np.abs(g1) ** 2 + np.abs(g2) ** 2))
        err = float(np.max(e / (atol + tol * size)))
        if not math.isfinite(err):
            err = 1e10
        if err <= 1.0:
            t = t + h if t_end - (t + h) > 1e-12 * max(1.0, abs(t_end)) else float(t_end)
            y1, y2 = g1, g2
            ts.append(t)
            s1.append(y1.copy())
            s2.append(y2.copy())
            e_eff = max(err, 1e-10)
            fac = safety * e_eff ** (-0.7 / 5.0) * err_prev ** (0.4 / 5.0)
            err_prev = e_eff
            h = min(max_step, h * min(5.0, max(0.2, fac)))
        else:
            n_rej += 1
            h *= max(0.2, safety * err ** (-0.2))
            if h < h_min:
                raise StiffnessError(t, h)
    else:
        raise StiffnessError(t, h)

    return ModeBatch(np.array(ts), k, xi, np.array(s1), np.array(s2), params,
                     resistive, dxi, n_rej)


def integrate_mode(initial: ModeState, params: PhysParams, t_end, tol=1e-8,
                   resistive=True, max_step=0.1) -> ModeTrajectory:
    """Integrate one mode from ``initial.t`` to ``t_end``."""
    batch = integrate_modes([initial.k], [initial.xi], [initial.p1], [initial.p2],
                            initial.t, t_end, params, tol=tol, resistive=resistive,
                            max_step=max_step)
    return batch.mode(0)


def shifted_matrix(mu_k2, t, alpha) -> np.ndarray:
    """The relabelled 2x2 matrix whose eigenvalues are given in closed form."""
    return np.array([[-mu_k2 * (1.0 + t * t), -alpha], [alpha, -mu_k2]], dtype=float)


def eigenvalues_shifted(mu_k2, t, alpha):
    """Closed-form eigenvalues ``-mu k^2 (2 + t^2)/2 +- sqrt((mu k^2 t^2)^2/4 - alpha^2)``.

    Principal square root; the first entry is the ``+`` root.
    """
    if np.any(np.asarray(mu_k2) < 0):
        raise ValueError("mu_k2 must be >= 0")
    centre = -0.5 * mu_k2 * (2.0 + t * t)
    root = np.sqrt(np.asarray(0.25 * (mu_k2 * t * t) ** 2 - alpha * alpha, dtype=complex))
    return centre + root, centre - root


def energy_E(state: ModeState, alpha) -> float:
    """Modified energy ``|p1|^2 + |p2|^2 + s/(1+s^2) Re(p1 conj(p2) / (i alpha))``.

    ``s = t - xi/k`` is the time shifted to the mode's critical time.
    """
    if alpha == 0:
        raise ValueError("alpha must be nonzero")
    base = abs(state.p1) ** 2 + abs(state.p2) ** 2
    if state.k == 0:
        return base
    s = state.t - state.xi / state.k
    cross = (state.p1 * np.conj(state.p2) / (1j * alpha)).real
    return float(base + s / (1.0 + s * s) * cross)


def instability_window(params: PhysParams) -> tuple[float, float]:
    nu = params.nu_y
    if nu <= 0:
        raise ValueError("the instability window needs nu_y > 0")
    a2 = params.alpha ** 2
    return 2.0 * a2 / nu, 4.0 * a2 / nu


def bump(u):
    """C-infinity bump ``exp(-1/(1-u^2))`` on ``|u| < 1``, zero outside."""
    u = np.asarray(u, float)
    inside = np.abs(u) < 1.0
    out = np.zeros(u.shape)
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


def instability_data(params: PhysParams, grid: GridSpec):
    """Initial data ``p1 = 0``, ``p2`` a bump on row ``k = -1`` over the window.

    The conjugate row ``k = +1`` (at ``-xi``) is filled for reality, and the
    pair is scaled to unit ``H^N`` norm with ``N = params.n_high``.

    Raises:
        WindowOffGridError: if no lattice frequency lies inside the window.
    """
    lo, hi = instability_window(params)
    xi = grid.xi[0]
    u = (xi - 0.5 * (lo + hi)) / (0.5 * (hi - lo))
    profile = bump(u)
    if grid.k_max < 1 or not np.any(profile > 0):
        raise WindowOffGridError(lo, hi, grid)
    c = grid.zeros()
    c[grid.k_max - 1] = profile
    c[grid.k_max + 1] = profile[::-1]
    p2 = SpectralField(c, grid)
    c = c / sobolev_norm(p2, params.n_high)
    return SpectralField.zeros(grid), SpectralField(c, grid)


def batch_from_fields(p1: SpectralField, p2: SpectralField):
    """Flatten the supported lattice points of ``(p1, p2)`` into mode arrays."""
    grid = p1.grid
    support = (np.abs(p1.coeffs) > 0) | (np.abs(p2.coeffs) > 0)
    kk, xx = np.broadcast_arrays(grid.k, grid.xi)
    return kk[support], xx[support], p1.coeffs[support], p2.coeffs[support]


def fit_slope(t, y):
    """Least-squares slope and intercept of ``y`` against ``t``."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    A = np.vstack([t, np.ones_like(t)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(slope), float(intercept)


def fit_decay_rate(t, norms, t_lo, t_hi) -> float:
    """Exponential decay rate ``-d log||p|| / dt`` fitted on ``[t_lo, t_hi]``."""
    t = np.asarray(t)
    sel = (t >= t_lo) & (t <= t_hi)
    slope, _ = fit_slope(t[sel], np.log(np.asarray(norms)[sel]))
    return -slope


@dataclass
class InflationReport:
    t: np.ndarray
    norm_hn: np.ndarray
    norm_hn1: np.ndarray
    p_in_norm: float
    lower_rate: float
    lower_rate_hn1: float
    growth_rate: float
    growth_rate_hn1: float
    t_start: float
    lower_ok: bool
    upper_ok: bool
    lower_hn1_ok: bool
    details: dict = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.lower_ok and self.upper_ok and self.lower_hn1_ok

    @property
    def ratio(self) -> np.ndarray:
        return self.norm_hn / self.p_in_norm


def inflation_lower_bound(batch: ModeBatch, params: PhysParams, n=None,
                          t_start=50.0) -> InflationReport:
    """Compare a non-resistive trajectory ensemble with the inflation envelopes.

    Lower envelope ``t nu / (8 alpha^2)``, upper envelope ``<t>^2`` (both
    relative to ``||p_in||_{H^N}``) and the ``H^{N-1}`` lower envelope
    ``t nu^2 / (32 alpha^4)``, checked at every sample with ``t >= t_start``.
    """
    n = params.n_high if n is None else n
    nu, al = params.nu_y, params.alpha
    hn = batch.norm(n)
    hn1 = batch.norm(n - 1)
    p_in = float(hn[0])
    lower = nu / (8.0 * al ** 2)
    lower1 = nu ** 2 / (32.0 * al ** 4)
    t = batch.t
    sel = t >= t_start
    ratio = hn / p_in
    ratio1 = hn1 / p_in
    upper_ok = bool(np.all(ratio[sel] <= 1.0 + t[sel] ** 2))
    lower_ok = bool(np.all(ratio[sel] >= lower * t[sel]))
    lower1_ok = bool(np.all(ratio1[sel] >= lower1 * t[sel]))
    rate, _ = fit_slope(t[sel], ratio[sel]) if sel.sum() > 1 else (float("nan"), 0)
    rate1, _ = fit_slope(t[sel], ratio1[sel]) if sel.sum() > 1 else (float("nan"), 0)
    details = {
        "min_lower_margin": float(np.min(ratio[sel] / (lower * t[sel]))) if sel.any() else float("nan"),
        "min_lower_margin_hn1": float(np.min(ratio1[sel] / (lower1 * t[sel]))) if sel.any() else float("nan"),
        "max_upper_fraction": float(np.max(ratio / (1.0 + t ** 2))),
    }
    return InflationReport(t, hn, hn1, p_in, lower, lower1, rate, rate1, t_start,
                           lower_ok, upper_ok, lower1_ok, details)
