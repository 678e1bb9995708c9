"""Experiment drivers: linear decay, norm inflation, small-data runs and the threshold sweep."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import stats

from .diagnostics import (EnergyReport, RegionTag, classify_region, damping_symbol_argmax,
                          dissipation_time_integrals, energy_report, fluctuation_norms,
                          lmu_sup_argmax)
from .linear_ode import (InflationReport, batch_from_fields, fit_decay_rate,
                         inflation_lower_bound, instability_data, integrate_modes)
from .nonlinear_solver import (BlowUpError, CFLCollapseError, SimState,
                               integrating_factor, simulate)
from .spectral_core import GridSpec, PhysParams, bracket, m_decay_rate, multiplier_M

EXPERIMENTS = ("linear-decay", "nonlinear", "inflation", "small-data",
               "threshold-sweep", "symbol-check")

DEFAULT_T_END = {
    "linear-decay": 400.0,
    "inflation": 400.0,
    "small-data": 200.0,
    "threshold-sweep": 200.0,
    "nonlinear": 200.0,
    "symbol-check": 1000.0,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment.

    ``c_stab`` is the sup-norm growth factor separating stable from unstable
    runs; ``eps`` defaults to ``eps_coefficient * mu^{3/2}``.
    """

    experiment: str = "linear-decay"
    params: PhysParams = field(default_factory=PhysParams)
    grid: GridSpec = field(default_factory=GridSpec)
    t_end: float = 400.0
    c_stab: float = 10.0
    bisection_depth: int = 8
    seed: int = 0
    eps: float | None = None
    eps_coefficient: float = 0.3
    mu_values: tuple = (0.02, 0.05, 0.1, 0.2)
    bracket_budget: int = 8
    mode_k_max: int = 2
    mode_xi_max: float = 4.0
    decay_bound: float = 3.0
    tol: float = 1e-6
    dt_max: float = 0.05
    cfl: float = 0.4
    dt_floor: float = 1e-8
    sample_interval: float = 1.0
    t_start: float = 50.0
    fit_start: float = 200.0
    fit_end: float = 400.0
    threads: int = 1
    output_dir: str = "out"
    log_scale: bool = True
    checkpoint: str | None = None
    resume: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if not self.c_stab > 1.0:
            raise ValueError("c_stab must exceed 1")
        if not self.t_end > 0.0:
            raise ValueError("t_end must be positive")
        if int(self.bisection_depth) != self.bisection_depth or self.bisection_depth < 0:
            raise ValueError("bisection_depth must be a non-negative integer")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    @property
    def amplitude(self) -> float:
        if self.eps is not None:
            return self.eps
        return self.eps_coefficient * self.params.mu ** 1.5


def sample_indices(t, interval):
    """First index at or past each multiple of ``interval``, plus the last."""
    t = np.asarray(t)
    if interval <= 0 or t.size < 2:
        return np.arange(t.size)
    marks = np.arange(t[0], t[-1], interval)
    idx = np.unique(np.searchsorted(t, marks - 1e-12 * max(1.0, t[-1])))
    return np.unique(np.append(idx, t.size - 1))


# -- linear decay -----------------------------------------------------------

@dataclass
class LinearDecayResult:
    t: np.ndarray
    norm_hn: np.ndarray
    p_in_norm: float
    sup_ratio: float
    decay_rate: float
    fit_window: tuple
    decay_bound: float
    min_rate: float
    n_modes: int
    n_steps: int
    reports: list

    @property
    def bounded(self) -> bool:
        return self.sup_ratio <= self.decay_bound

    @property
    def decays(self) -> bool:
        return self.decay_rate >= self.min_rate

    @property
    def success(self) -> bool:
        return self.bounded and self.decays


def decay_lattice(cfg: ExperimentConfig):
    """Boolean mask of lattice modes with ``0 < |k| <= mode_k_max`` and ``|xi| <= mode_xi_max``."""
    g = cfg.grid
    sel = (np.abs(g.k) > 0) & (np.abs(g.k) <= cfg.mode_k_max) & \
        (np.abs(g.xi) <= cfg.mode_xi_max + 1e-12)
    return np.broadcast_to(sel, g.shape)


def _fields_from_batch(batch, mask, i, grid):
    c1 = grid.zeros()
    c2 = grid.zeros()
    c1[mask] = batch.p1[i]
    c2[mask] = batch.p2[i]
    return c1, c2


def run_linear_decay(cfg: ExperimentConfig) -> LinearDecayResult:
    """Integrate a seeded random lattice of modes under the resistive linear flow."""
    prm, g = cfg.params, cfg.grid
    mask = decay_lattice(cfg)
    n = int(mask.sum())
    if n == 0:
        raise ValueError("decay lattice holds no modes")
    rng = np.random.default_rng(cfg.seed)
    z = rng.normal(size=(4, n))
    p1 = z[0] + 1j * z[1]
    p2 = z[2] + 1j * z[3]
    kk, xx = np.broadcast_arrays(g.k, g.xi)
    batch = integrate_modes(kk[mask], xx[mask], p1, p2, 0.0, cfg.t_end, prm,
                            tol=cfg.tol, resistive=True, dxi=g.dxi)
    hn = batch.norm(prm.n_high)
    p_in = float(hn[0])
    lo, hi = cfg.fit_start, min(cfg.fit_end, cfg.t_end)
    if prm.mu > 0 and hi > lo:
        rate = fit_decay_rate(batch.t, hn, lo, hi)
    else:
        rate = float("nan")
    reports = []
    for i in sample_indices(batch.t, cfg.sample_interval):
        c1, c2 = _fields_from_batch(batch, mask, i, g)
        reports.append(energy_report(SimState.from_arrays(c1, c2, batch.t[i], prm, g)))
    return LinearDecayResult(
        t=batch.t, norm_hn=hn, p_in_norm=p_in, sup_ratio=float(np.max(hn) / p_in),
        decay_rate=rate, fit_window=(lo, hi), decay_bound=cfg.decay_bound,
        min_rate=0.5 * prm.mu, n_modes=n, n_steps=batch.t.size - 1, reports=reports)


# -- norm inflation ---------------------------------------------------------

@dataclass
class InflationResult:
    envelope: InflationReport
    n_modes: int
    n_steps: int
    reports: list

    @property
    def success(self) -> bool:
        return self.envelope.success


def run_inflation(cfg: ExperimentConfig) -> InflationResult:
    """Non-resistive linear run from the windowed bump data.

    Raises:
        WindowOffGridError: if the frequency window misses the lattice.
    """
    prm, g = cfg.params, cfg.grid
    f1, f2 = instability_data(prm, g)
    k, xi, p1, p2 = batch_from_fields(f1, f2)
    batch = integrate_modes(k, xi, p1, p2, 0.0, cfg.t_end, prm, tol=cfg.tol,
                            resistive=False, dxi=g.dxi)
    env = inflation_lower_bound(batch, prm, t_start=cfg.t_start)
    mask = (np.abs(f1.coeffs) > 0) | (np.abs(f2.coeffs) > 0)
    reports = []
    for i in sample_indices(batch.t, cfg.sample_interval):
        c1, c2 = _fields_from_batch(batch, mask, i, g)
        reports.append(energy_report(SimState.from_arrays(c1, c2, batch.t[i], prm, g)))
    return InflationResult(env, k.size, batch.t.size - 1, reports)


# -- small data -------------------------------------------------------------

def smalldata_fields(grid: GridSpec, params: PhysParams, eps, seed):
    """Random-phase real data with spectrum ``<(k, xi)>^{-(N+2)}`` scaled to ``H^N`` size ``eps``.

    Support is ``|k| <= K/3`` inside the dealiased band; the mean mode is 0.
    """
    rng = np.random.default_rng(seed)
    n = params.n_high
    amp = bracket(grid.k, grid.xi) ** (-(n + 2))
    support = grid.dealias_mask & (np.abs(grid.k) <= grid.k_max / 3.0)
    out = []
    for _ in range(2):
        phase = np.exp(2j * np.pi * rng.random(grid.shape))
        c = np.where(support, amp * phase, 0.0)
        c = 0.5 * (c + np.conj(c[::-1, ::-1]))
        c[grid.k_max, grid.xi_index_max] = 0.0
        out.append(c)
    w = bracket(grid.k, grid.xi) ** n
    size = math.sqrt(grid.dxi * sum(float(np.sum(np.abs(c * w) ** 2)) for c in out))
    scale = eps / size if size > 0 else 0.0
    return out[0] * scale, out[1] * scale


def _hn_total(state: SimState, n) -> float:
    w = bracket(state.grid.k, state.grid.xi) ** (2 * n)
    e = np.abs(state.p1.coeffs) ** 2 + np.abs(state.p2.coeffs) ** 2
    return math.sqrt(state.grid.dxi * float(np.sum(w * e)))


@dataclass
class SmallDataResult:
    eps: float
    mu: float
    stable: bool
    criterion: str
    sup_norm_ratio: float
    t_reached: float
    t_end: float
    times: np.ndarray
    hn_series: np.ndarray
    reports: list
    integrals: dict
    scaled_integrals: dict
    avg_row_factor_max_dev: float
    n_steps: int
    error: str = ""


def run_nonlinear(state: SimState, cfg: ExperimentConfig):
    """Simulate ``state`` to ``cfg.t_end`` recording the ``H^N`` size at every step.

    Returns ``(state, times, hn, reports, fluct, error)``; ``error`` is empty
    unless the solver aborted, in which case the series stop at the abort.
    """
    n = state.params.n_high
    times = [state.t]
    hn = [_hn_total(state, n)]
    reports = [energy_report(state)]
    fluct = [fluctuation_norms(state)]

    def record(st, _rep):
        times.append(st.t)
        hn.append(_hn_total(st, n))
        reports.append(energy_report(st))
        fluct.append(fluctuation_norms(st))

    error = ""
    final = state
    try:
        final, _ = simulate(state, cfg.t_end, dt_max=cfg.dt_max, cfl=cfg.cfl,
                            dt_floor=cfg.dt_floor, callback=record)
    except (CFLCollapseError, BlowUpError) as exc:
        error = str(exc)
    return final, np.array(times), np.array(hn), reports, fluct, error


def run_smalldata(cfg: ExperimentConfig, eps=None) -> SmallDataResult:
    """Nonlinear run from seeded random data of ``H^N`` size ``eps``.

    Stable iff ``sup_t ||(v, b)||_{H^N} <= c_stab * eps`` up to ``t_end``;
    a solver abort is recorded as unstable with criterion ``"budget"``.
    """
    prm, g = cfg.params, cfg.grid
    eps = cfg.amplitude if eps is None else float(eps)
    if eps < 0:
        raise ValueError("eps must be >= 0")
    # the x-averaged magnetic row is left untouched by the dissipation factor
    e2 = integrating_factor(prm, g, 0.0, cfg.t_end)[1][g.k_max]
    row_dev = float(np.max(np.abs(e2 - 1.0)))
    if eps == 0.0:
        z = EnergyReport(0.0, *([0.0] * 10))
        return SmallDataResult(0.0, prm.mu, True, "trivial", 0.0, cfg.t_end, cfg.t_end,
                               np.array([0.0]), np.array([0.0]), [z], {}, {}, row_dev, 0)
    c1, c2 = smalldata_fields(g, prm, eps, cfg.seed)
    state = SimState.from_arrays(c1, c2, 0.0, prm, g)
    final, times, hn, reports, fluct, error = run_nonlinear(state, cfg)
    ratio = float(np.max(hn) / eps)
    if error:
        stable, criterion = False, "budget"
    else:
        stable, criterion = ratio <= cfg.c_stab, "sup-norm"
    ints = dissipation_time_integrals(reports, fluct)
    raw = {
        "mu_diss_p1": prm.mu * ints.diss_p1,
        "mu_diss_p2": prm.mu * ints.diss_p2,
        "mdot_p1": ints.mdot_p1,
        "mdot_p2": ints.mdot_p2,
        "fluct_p1": ints.fluct_p1,
        "fluct_p2": ints.fluct_p2,
    }
    eps2 = eps * eps
    scaled = {
        "mu_diss_p1_over_eps2": raw["mu_diss_p1"] / eps2,
        "mu_diss_p2_over_eps2": raw["mu_diss_p2"] / eps2,
        "mdot_p1_over_eps2": raw["mdot_p1"] / eps2,
        "mdot_p2_over_eps2": raw["mdot_p2"] / eps2,
        "fluct_p1_over_eps2_per_mu": ints.scaled(prm.mu, eps)["fluct_p1"] if prm.mu > 0 else math.inf,
        "fluct_p2_over_eps2_per_mu": ints.scaled(prm.mu, eps)["fluct_p2"] if prm.mu > 0 else math.inf,
    }
    return SmallDataResult(eps, prm.mu, stable, criterion, ratio, float(final.t if not error else times[-1]),
                           cfg.t_end, times, hn, reports, raw, scaled, row_dev,
                           times.size - 1, error)


# -- threshold sweep --------------------------------------------------------

Verdict = Callable[[float, float], tuple]


@dataclass
class VerdictRecord:
    mu: float
    eps: float
    stable: bool
    criterion: str
    sup_norm_ratio: float
    t_end: float


@dataclass
class SweepResult:
    mu_values: list
    eps_star: list
    brackets: list
    conclusive: list
    gamma_fit: float
    ci: float
    n_points: int
    verdicts: list

    def summary(self) -> dict:
        return {"gamma_fit": self.gamma_fit, "ci": self.ci, "n_points": self.n_points}


def planted_verdict(gamma, c0=1.0) -> Verdict:
    """Synthetic rule: stable iff ``eps < c0 * mu^gamma``."""
    def rule(mu, eps):
        return eps < c0 * mu ** gamma, "planted", eps / (c0 * mu ** gamma)
    return rule


def smalldata_verdict(cfg: ExperimentConfig) -> Verdict:
    """Verdict from full nonlinear runs in the horizontal-resistivity regime."""
    def rule(mu, eps):
        prm = replace(cfg.params, nu_x=mu, nu_y=mu, kappa_x=mu, kappa_y=0.0, mu=mu)
        res = run_smalldata(replace(cfg, params=prm, eps=eps), eps)
        return res.stable, res.criterion, res.sup_norm_ratio
    return rule


def _threshold_for(mu, cfg: ExperimentConfig, verdict: Verdict):
    log = []

    def probe(eps):
        stable, crit, ratio = verdict(mu, eps)
        log.append(VerdictRecord(mu, eps, bool(stable), crit, float(ratio), cfg.t_end))
        return bool(stable)

    factor = 4.0
    start = cfg.eps_coefficient * mu ** 1.5
    lo = hi = None
    if probe(start):
        lo = start
        eps = start
        for _ in range(cfg.bracket_budget):
            eps *= factor
            if probe(eps):
                lo = eps
            else:
                hi = eps
                break
    else:
        hi = start
        eps = start
        for _ in range(cfg.bracket_budget):
            eps /= factor
            if probe(eps):
                lo = eps
                break
            hi = eps
    if lo is None or hi is None:
        return float("nan"), (lo, hi), False, log
    for _ in range(cfg.bisection_depth):
        mid = math.sqrt(lo * hi)
        if probe(mid):
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi), (lo, hi), True, log


def fit_power_law(mu, eps, level=0.95):
    """Slope of ``log eps`` against ``log mu`` with a t-interval half-width."""
    x = np.log(np.asarray(mu, float))
    y = np.log(np.asarray(eps, float))
    n = x.size
    if n < 2:
        return float("nan"), float("nan")
    slope, intercept = np.polyfit(x, y, 1)
    if n < 3:
        return float(slope), float("inf")
    resid = y - (slope * x + intercept)
    s2 = float(np.sum(resid ** 2)) / (n - 2)
    se = math.sqrt(s2 / float(np.sum((x - x.mean()) ** 2)))
    return float(slope), float(stats.t.ppf(0.5 + level / 2.0, n - 2) * se)


def sweep_threshold(cfg: ExperimentConfig, verdict: Verdict | None = None) -> SweepResult:
    """Bracket and bisect the largest stable amplitude for every ``mu``.

    The bracket starts at ``eps_coefficient * mu^{3/2}`` and expands by
    factors of 4 for up to ``bracket_budget`` probes; bisection is geometric,
    so the log-width of the bracket halves ``bisection_depth`` times.
    Entries without a bracket are inconclusive and are left out of the fit.
    """
    verdict = smalldata_verdict(cfg) if verdict is None else verdict
    mus = sorted(float(m) for m in cfg.mu_values)
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            outs = list(pool.map(lambda m: _threshold_for(m, cfg, verdict), mus))
    else:
        outs = [_threshold_for(m, cfg, verdict) for m in mus]
    eps_star = [o[0] for o in outs]
    conclusive = [o[2] for o in outs]
    fit_mu = [m for m, ok in zip(mus, conclusive) if ok]
    fit_eps = [e for e, ok in zip(eps_star, conclusive) if ok]
    gamma, ci = fit_power_law(fit_mu, fit_eps)
    verdicts = [rec for o in outs for rec in o[3]]
    return SweepResult(mus, eps_star, [o[1] for o in outs], conclusive, gamma, ci,
                       len(fit_mu), verdicts)


# -- symbol checks ----------------------------------------------------------

@dataclass
class SymbolCheckResult:
    times: list
    damping_sup: list
    damping_argmax: list
    damping_constant: float
    lmu_argmax: float
    lmu_constant: float
    lmu_exceeds_reference: bool
    mdot_fd_max_error: float
    region_pairs: int
    region_partition_ok: bool

    @property
    def success(self) -> bool:
        return (all(math.isfinite(v) for v in self.damping_sup)
                and self.mdot_fd_max_error <= 1e-6 and self.region_partition_ok)


def mdot_fd_error(times, k, xi, h=1e-4) -> float:
    """Max gap between central-difference ``-dM/dt / M`` and its closed form."""
    t, k, xi = np.broadcast_arrays(np.asarray(times, float), np.asarray(k, float),
                                   np.asarray(xi, float))
    m = multiplier_M(t, k, xi)
    fd = -(multiplier_M(t + h, k, xi) - multiplier_M(t - h, k, xi)) / (2.0 * h) / m
    return float(np.max(np.abs(fd - m_decay_rate(t, k, xi))))


def region_partition(pairs):
    """Counts per tag and whether each pair received exactly one tag."""
    counts = {tag: 0 for tag in RegionTag}
    for a, b in pairs:
        counts[classify_region(a, b)] += 1
    return counts, sum(counts.values()) == len(pairs)


def run_symbol_check(cfg: ExperimentConfig, times=(1.0, 10.0, 100.0, 1000.0)) -> SymbolCheckResult:
    g = cfg.grid
    sups, args = [], []
    for t in times:
        k, xi, val = damping_symbol_argmax(t, g)
        sups.append(t * val)
        args.append((k, xi))
    s_star, lmu = lmu_sup_argmax()
    rng = np.random.default_rng(cfg.seed)
    n = 2000
    kk = rng.integers(1, 9, n) * rng.choice([-1, 1], n)
    fd_err = mdot_fd_error(rng.uniform(0.5, 100.0, n), kk, rng.uniform(-50.0, 50.0, n))
    modes = rng.integers(-6, 7, size=(n, 4)).astype(float)
    pairs = [((a, b), (c, d)) for a, b, c, d in modes]
    _, ok = region_partition(pairs)
    return SymbolCheckResult(list(times), sups, args, float(max(sups)), s_star, lmu,
                             lmu > math.sqrt(2.0 / 3.0), fd_err, len(pairs), ok)
