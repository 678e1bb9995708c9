"""Dealiased transform-method solver for the full ``(p1, p2)`` system.

Time stepping is a Lawson (integrating-factor) fourth-order Runge-Kutta
scheme: the anisotropic dissipation is integrated exactly through the
diagonal factor ``exp(-int [c_x k^2 + c_y (xi - k tau)^2] dtau)`` and the
shear, magnetic coupling and nonlinearity are advanced by classical RK4 in
the transformed variables.

Products are formed on the physical grid of the full lattice; with the 2/3
retention rule the products of retained modes never alias back onto
retained modes, so the result is exact after the dealias projection.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .spectral_core import GridSpec, PhysParams, SpectralField, l2_norm_sq, split_average

__all__ = [
    "SimState", "StepReport", "CFLCollapseError", "BlowUpError",
    "to_physical", "from_physical", "reconstruct_fields", "fields_to_p",
    "divergence_residual", "nonlinear_rhs", "linear_rhs", "integrating_factor",
    "step", "simulate", "energy_budget", "split_average",
    "save_checkpoint", "load_checkpoint",
]

BLOWUP_LIMIT = 1e8


class CFLCollapseError(ArithmeticError):
    def __init__(self, t, dt, floor):
        super().__init__(f"CFL step {dt:.3g} below floor {floor:.3g} at t={t:.6g}")
        self.t, self.dt, self.floor = t, dt, floor


class BlowUpError(ArithmeticError):
    def __init__(self, t, value):
        super().__init__(f"physical fields blew up at t={t:.6g} (max |field| = {value:.3g})")
        self.t, self.value = t, value


@dataclass(frozen=True, eq=False)
class SimState:
    p1: SpectralField
    p2: SpectralField
    t: float
    params: PhysParams
    grid: GridSpec

    @classmethod
    def from_arrays(cls, p1, p2, t, params, grid):
        return cls(SpectralField(p1, grid), SpectralField(p2, grid), float(t), params, grid)

    def l2_energy(self) -> float:
        return l2_norm_sq(self.p1.coeffs, self.grid) + l2_norm_sq(self.p2.coeffs, self.grid)


@dataclass(frozen=True)
class StepReport:
    dt_taken: float
    cfl_estimate: float
    nonlinear_sup: float
    budget_residual: float


def to_physical(coeffs, grid: GridSpec) -> np.ndarray:
    """Real physical samples on ``x_a = 2 pi a / n_kx``, ``y_b = L b / n_ky``.

    Accepts a stack ``(..., n_kx, n_ky)``.
    """
    scale = grid.n_kx * grid.n_ky / grid.len_y
    shifted = np.fft.ifftshift(coeffs, axes=(-2, -1))
    return np.fft.ifft2(shifted, axes=(-2, -1)).real * scale


def from_physical(values, grid: GridSpec) -> np.ndarray:
    scale = grid.len_y / (grid.n_kx * grid.n_ky)
    return np.fft.fftshift(np.fft.fft2(values, axes=(-2, -1)), axes=(-2, -1)) * scale


def _symbols(grid: GridSpec, t):
    k = grid.k
    eta = grid.xi - k * t
    lam2 = k * k + eta * eta
    inv_lam = np.zeros_like(lam2)
    np.divide(1.0, np.sqrt(lam2), out=inv_lam, where=lam2 > 0)
    return k, eta, lam2, inv_lam


def _velocity(p, k, eta, inv_lam):
    """``v = -grad_t^perp Lambda_t^{-1} p`` with ``grad^perp = (-d_y^t, d_x)``."""
    return 1j * eta * inv_lam * p, -1j * k * inv_lam * p


def _curl_inv(w1, w2, k, eta, inv_lam):
    """``Lambda_t^{-1} grad_t^perp . w``."""
    return (-1j * eta * w1 + 1j * k * w2) * inv_lam


def reconstruct_fields(state: SimState):
    """Velocity and magnetic components ``(v1, v2, b1, b2)`` from ``(p1, p2)``."""
    k, eta, _, inv_lam = _symbols(state.grid, state.t)
    v1, v2 = _velocity(state.p1.coeffs, k, eta, inv_lam)
    b1, b2 = _velocity(state.p2.coeffs, k, eta, inv_lam)
    g = state.grid
    return (SpectralField(v1, g), SpectralField(v2, g),
            SpectralField(b1, g), SpectralField(b2, g))


def fields_to_p(w1: SpectralField, w2: SpectralField, t) -> SpectralField:
    """``Lambda_t^{-1} grad_t^perp . w`` for a vector field ``w``."""
    k, eta, _, inv_lam = _symbols(w1.grid, t)
    return w1.with_coeffs(_curl_inv(w1.coeffs, w2.coeffs, k, eta, inv_lam))


def divergence_residual(w1: SpectralField, w2: SpectralField, t) -> float:
    """Max of ``|k w1 + (xi - k t) w2|`` over the lattice."""
    k, eta, _, _ = _symbols(w1.grid, t)
    return float(np.max(np.abs(k * w1.coeffs + eta * w2.coeffs)))


def _nonlinear(p1, p2, t, grid: GridSpec):
    """Nonlinear tendencies and the max physical field magnitude."""
    k, eta, _, inv_lam = _symbols(grid, t)
    v1, v2 = _velocity(p1, k, eta, inv_lam)
    b1, b2 = _velocity(p2, k, eta, inv_lam)
    dx = 1j * k
    dy = 1j * eta
    spectra = np.stack([v1, v2, b1, b2,
                        dx * v1, dy * v1, dx * v2, dy * v2,
                        dx * b1, dy * b1, dx * b2, dy * b2])
    (pv1, pv2, pb1, pb2,
     v1x, v1y, v2x, v2y, b1x, b1y, b2x, b2y) = to_physical(spectra, grid)
    sup = float(max(np.max(np.hypot(pv1, pv2)), np.max(np.hypot(pb1, pb2))))
    if not math.isfinite(sup) or sup > BLOWUP_LIMIT:
        raise BlowUpError(t, sup)
    # b.grad_t b - v.grad_t v  and  b.grad_t v - v.grad_t b
    prods = np.stack([
        pb1 * b1x + pb2 * b1y - pv1 * v1x - pv2 * v1y,
        pb1 * b2x + pb2 * b2y - pv1 * v2x - pv2 * v2y,
        pb1 * v1x + pb2 * v1y - pv1 * b1x - pv2 * b1y,
        pb1 * v2x + pb2 * v2y - pv1 * b2x - pv2 * b2y,
    ])
    f1, f2, g1, g2 = from_physical(prods, grid)
    mask = grid.dealias_mask
    n1 = np.where(mask, _curl_inv(f1, f2, k, eta, inv_lam), 0.0)
    n2 = np.where(mask, _curl_inv(g1, g2, k, eta, inv_lam), 0.0)
    return n1, n2, sup


def _linear(p1, p2, t, grid: GridSpec, alpha):
    k, eta, lam2, _ = _symbols(grid, t)
    a = k * eta / np.maximum(lam2, 1e-300)
    c = 1j * alpha * k
    return a * p1 + c * p2, -a * p2 + c * p1


def nonlinear_rhs(state: SimState):
    """``(Lambda^{-1} grad^perp (b.grad b - v.grad v), Lambda^{-1} grad^perp (b.grad v - v.grad b))``."""
    n1, n2, _ = _nonlinear(state.p1.coeffs, state.p2.coeffs, state.t, state.grid)
    return SpectralField(n1, state.grid), SpectralField(n2, state.grid)


def linear_rhs(state: SimState):
    """Shear and magnetic-coupling tendencies, dissipation excluded."""
    l1, l2 = _linear(state.p1.coeffs, state.p2.coeffs, state.t, state.grid,
                     state.params.alpha)
    return SpectralField(l1, state.grid), SpectralField(l2, state.grid)


def _dissipation_integral(grid: GridSpec, t0, t1, coef_x, coef_y):
    k = grid.k
    e0 = grid.xi - k * t0
    e1 = grid.xi - k * t1
    dt = t1 - t0
    # factored cubic antiderivative: ((e0^3 - e1^3) / 3k) = dt (e0^2 + e0 e1 + e1^2) / 3
    return coef_x * k * k * dt + coef_y * dt * (e0 * e0 + e0 * e1 + e1 * e1) / 3.0


def integrating_factor(params: PhysParams, grid: GridSpec, t0, t1):
    """Exact dissipation factors ``(E1, E2)`` from ``t0`` to ``t1`` for p1 and p2."""
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    e1 = np.exp(-_dissipation_integral(grid, t0, t1, params.nu_x, params.nu_y))
    e2 = np.exp(-_dissipation_integral(grid, t0, t1, params.kappa_x, params.kappa_y))
    return e1, e2


def _budget_rate(p1, p2, t, grid, params):
    """Instantaneous ``d/dt ||p||^2`` from dissipation and shear."""
    k, eta, lam2, _ = _symbols(grid, t)
    a = k * eta / np.maximum(lam2, 1e-300)
    d1 = params.nu_x * k * k + params.nu_y * eta * eta
    d2 = params.kappa_x * k * k + params.kappa_y * eta * eta
    q1 = np.abs(p1) ** 2
    q2 = np.abs(p2) ** 2
    diss = 2.0 * grid.dxi * float(np.sum(d1 * q1 + d2 * q2))
    shear = 2.0 * grid.dxi * float(np.sum(a * (q1 - q2)))
    return diss, shear


def energy_budget(state: SimState) -> dict:
    """Instantaneous L^2 energy budget of ``(p1, p2)``.

    ``total`` is ``2 Re <p, dp/dt>`` from the full tendency, split into
    ``-dissipation + shear + coupling + nonlinear``.  Coupling and nonlinear
    transfer vanish analytically under the dealiased truncation, so
    ``residual = total - (shear - dissipation)`` measures the closure defect.
    """
    g, prm = state.grid, state.params
    p1, p2 = state.p1.coeffs, state.p2.coeffs
    l1, l2 = _linear(p1, p2, state.t, g, prm.alpha)
    n1, n2, _ = _nonlinear(p1, p2, state.t, g)
    k, eta, lam2, _ = _symbols(g, state.t)
    d1 = prm.nu_x * k * k + prm.nu_y * eta * eta
    d2 = prm.kappa_x * k * k + prm.kappa_y * eta * eta
    a = k * eta / np.maximum(lam2, 1e-300)
    c = 1j * prm.alpha * k

    def inner(x, y):
        return 2.0 * g.dxi * float(np.sum((np.conj(x) * y).real))

    total = inner(p1, l1 + n1 - d1 * p1) + inner(p2, l2 + n2 - d2 * p2)
    dissipation = inner(p1, d1 * p1) + inner(p2, d2 * p2)
    shear = inner(p1, a * p1) + inner(p2, -a * p2)
    coupling = inner(p1, c * p2) + inner(p2, c * p1)
    transfer = inner(p1, n1) + inner(p2, n2)
    energy = state.l2_energy()
    residual = total - (shear - dissipation)
    return {
        "energy": energy,
        "total": total,
        "dissipation": dissipation,
        "shear": shear,
        "coupling": coupling,
        "nonlinear": transfer,
        "residual": residual,
    }


def _project(u, grid: GridSpec):
    """Dealias, enforce the reality constraint and the zero mean mode."""
    u = np.where(grid.dealias_mask, u, 0.0)
    u = 0.5 * (u + np.conj(u[..., ::-1, ::-1]))
    u[..., grid.k_max, grid.xi_index_max] = 0.0
    return u


def _retained_speed_scale(grid: GridSpec, t):
    kr = grid.k_retained
    return kr + grid.xi_retained + kr * abs(t)


def step(state: SimState, dt_max, cfl=0.4, dt_floor=1e-8, nonlinear=True):
    """Advance one Lawson-RK4 step.

    The step is ``min(dt_max, cfl / rate)`` where ``rate`` combines the
    physical field magnitude times the largest retained shear-frame
    wavenumber, the Alfven frequency ``alpha k`` and the shear coefficient
    bound.

    Raises:
        CFLCollapseError: if the CFL-limited step is below ``dt_floor``.
        BlowUpError: if the physical fields become non-finite or huge.
    """
    if not dt_max > 0:
        raise ValueError("dt_max must be positive")
    g, prm, t = state.grid, state.params, state.t
    alpha = prm.alpha

    def tendency(tq, u):
        l1, l2 = _linear(u[0], u[1], tq, g, alpha)
        if not nonlinear:
            return np.stack([l1, l2]), 0.0
        n1, n2, sup = _nonlinear(u[0], u[1], tq, g)
        return np.stack([l1 + n1, l2 + n2]), sup

    u = np.stack([state.p1.coeffs, state.p2.coeffs])
    k1, sup = tendency(t, u)
    rate = 2.0 * sup * _retained_speed_scale(g, t + dt_max) + abs(alpha) * g.k_retained + 0.5
    dt_cfl = cfl / rate
    if dt_cfl < dt_floor:
        raise CFLCollapseError(t, dt_cfl, dt_floor)
    h = min(dt_max, dt_cfl)

    ea = np.stack(integrating_factor(prm, g, t, t + 0.5 * h))
    eb = np.stack(integrating_factor(prm, g, t + 0.5 * h, t + h))
    ef = ea * eb
    k2, _ = tendency(t + 0.5 * h, ea * (u + 0.5 * h * k1))
    k3, _ = tendency(t + 0.5 * h, ea * u + 0.5 * h * k2)
    k4, _ = tendency(t + h, ef * u + h * eb * k3)
    new = ef * (u + h / 6.0 * k1) + eb * (h / 3.0) * (k2 + k3) + h / 6.0 * k4
    new = _project(new, g)

    t_new = t + h
    e_old = state.l2_energy()
    e_new = l2_norm_sq(new[0], g) + l2_norm_sq(new[1], g)
    r0 = _budget_rate(u[0], u[1], t, g, prm)
    r1 = _budget_rate(new[0], new[1], t_new, g, prm)
    predicted = 0.5 * h * ((r0[1] - r0[0]) + (r1[1] - r1[0]))
    residual = abs((e_new - e_old) - predicted) / max(e_old, 1e-300)

    out = SimState.from_arrays(new[0], new[1], t_new, prm, g)
    return out, StepReport(h, dt_cfl, sup, residual)


def simulate(state: SimState, t_end, dt_max=0.05, cfl=0.4, dt_floor=1e-8,
             nonlinear=True, callback=None, max_steps=10_000_000):
    """Step until ``t_end``; ``callback(state, report)`` runs after every step.

    Returns the final state and the list of step reports.
    """
    reports = []
    for _ in range(max_steps):
        remaining = t_end - state.t
        if remaining <= 1e-12 * max(1.0, abs(t_end)):
            if state.t != t_end:
                state = replace(state, t=float(t_end))
            break
        h = min(dt_max, remaining)
        state, rep = step(state, h, cfl=cfl, dt_floor=dt_floor, nonlinear=nonlinear)
        close = t_end - state.t <= 1e-12 * max(1.0, abs(t_end))
        if (h == remaining and rep.dt_taken == h) or close:
            state = replace(state, t=float(t_end))
        reports.append(rep)
        if callback is not None:
            callback(state, rep)
    else:
        raise RuntimeError(f"step budget of {max_steps} exhausted at t={state.t:.6g}")
    return state, reports


# -- checkpoints ------------------------------------------------------------

MAGIC = b"CMHD1"
_HEADER = struct.Struct("<5sIIdddddddddddd")
_PARAM_ORDER = ("alpha", "nu_x", "nu_y", "kappa_x", "kappa_y", "mu",
                "n_high", "n_low", "c_rate")


def save_checkpoint(path, state: SimState):
    """Write ``state`` as a flat little-endian record.

    Layout: magic ``CMHD1``; uint32 ``n_kx``, ``n_ky``; float64 ``len_y``,
    ``dealias_fraction``, ``t``; float64 params in the order
    ``alpha, nu_x, nu_y, kappa_x, kappa_y, mu, n_high, n_low, c_rate``;
    then ``p1`` and ``p2`` as row-major complex128 (real, imag interleaved).
    """
    g, p = state.grid, state.params
    header = _HEADER.pack(MAGIC, g.n_kx, g.n_ky, g.len_y, g.dealias_fraction, state.t,
                          *(float(getattr(p, name)) for name in _PARAM_ORDER))
    body = np.concatenate([state.p1.coeffs.ravel(), state.p2.coeffs.ravel()])
    Path(path).write_bytes(header + body.astype("<c16").tobytes())


def load_checkpoint(path) -> SimState:
    raw = Path(path).read_bytes()
    if raw[:5] != MAGIC:
        raise ValueError(f"{path}: not a CMHD1 checkpoint")
    vals = _HEADER.unpack_from(raw)
    n_kx, n_ky, len_y, frac, t = vals[1:6]
    pvals = dict(zip(_PARAM_ORDER, vals[6:]))
    pvals["n_high"] = int(pvals["n_high"])
    grid = GridSpec(n_kx, n_ky, len_y, frac)
    params = PhysParams(**pvals)
    data = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size)
    if data.size != 2 * n_kx * n_ky:
        raise ValueError(f"{path}: truncated coefficient block")
    p1 = data[: n_kx * n_ky].reshape(n_kx, n_ky).astype(complex)
    p2 = data[n_kx * n_ky:].reshape(n_kx, n_ky).astype(complex)
    return SimState.from_arrays(p1, p2, t, params, grid)
