import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shearmhd.diagnostics import (REPORT_COLUMNS, DissipationIntegrals, EnergyReport,
                                  RegionTag, classify_region, damping_symbol,
                                  damping_symbol_argmax, damping_symbol_sup,
                                  dissipation_time_integrals, energy_report,
                                  fluctuation_norms, lmu_profile, lmu_sup_argmax,
                                  lmu_sup_constant, write_reports_csv)
from shearmhd.nonlinear_solver import SimState, simulate
from shearmhd.spectral_core import GridSpec, PhysParams, SpectralField


def single_mode_state(amp=0.5, t=0.0, alpha=1.0):
    g = GridSpec(9, 17)
    p1 = SpectralField.point_mass(g, 1, 0.0, amp).realified() + SpectralField.point_mass(
        g, -1, 0.0, amp).realified()
    return SimState(p1, SpectralField.zeros(g), t, PhysParams(alpha=alpha), g)


class TestEnergyReport:
    def test_zero_state(self):
        g = GridSpec(9, 17)
        rep = energy_report(SimState.from_arrays(g.zeros(), g.zeros(), 3.0, PhysParams(), g))
        assert all(getattr(rep, c) == 0.0 for c in REPORT_COLUMNS[1:])
        assert rep.t == 3.0

    def test_single_mode_hand_values(self):
        # modes (+-1, 0) at t = 0: bracket^2 = 2, weight M = 1, |grad|^2 = 1, -dM/M = 1
        amp = 0.5
        state = single_mode_state(amp)
        rep = energy_report(state)
        dxi = state.grid.dxi
        expected = 2 * amp ** 2 * 2 ** 6 * dxi
        assert rep.hn_p1 == pytest.approx(math.sqrt(expected), rel=1e-13)
        assert rep.diss_p1 == pytest.approx(expected, rel=1e-13)
        assert rep.mdot_p1 == pytest.approx(expected, rel=1e-13)
        assert rep.hn_p2 == 0 and rep.diss_p2 == 0 and rep.avg_b_norm == 0
        assert rep.cross_E == pytest.approx(2 * amp ** 2 * dxi, rel=1e-13)

    def test_average_magnetic_norm(self):
        g = GridSpec(9, 17)
        p2 = SpectralField.point_mass(g, 0, g.dxi, 1.0).realified()
        rep = energy_report(SimState(SpectralField.zeros(g), p2, 0.0, PhysParams(), g))
        assert rep.avg_b_norm == pytest.approx(rep.hn_p2, rel=1e-13)
        assert rep.diss_p2 == 0.0

    def test_cross_energy_equivalence(self):
        rng = np.random.default_rng(0)
        g = GridSpec(9, 17)
        for alpha in (0.6, 1.0, 3.0):
            c = rng.normal(size=(2,) + g.shape) + 1j * rng.normal(size=(2,) + g.shape)
            state = SimState.from_arrays(c[0], c[1], 1.7, PhysParams(alpha=alpha), g)
            base = state.l2_energy()
            e = energy_report(state).cross_E
            assert (1 - 1 / (4 * alpha)) * base <= e <= (1 + 1 / (4 * alpha)) * base

    def test_csv(self, tmp_path):
        reps = [energy_report(single_mode_state(t=t)) for t in (0.0, 0.5)]
        path = tmp_path / "r.csv"
        write_reports_csv(path, reps)
        rows = list(csv.reader(path.open()))
        assert tuple(rows[0]) == REPORT_COLUMNS
        assert len(rows) == 3 and float(rows[2][1]) == reps[1].hn_p1

    def test_hn_decreases_under_pure_dissipation(self):
        g = GridSpec(9, 17)
        rng = np.random.default_rng(2)
        p1 = g.zeros()
        p1[g.k_max] = rng.normal(size=g.n_ky) + 1j * rng.normal(size=g.n_ky)
        p1 = SpectralField(p1, g).realified().coeffs * g.dealias_mask
        p1[g.k_max, g.xi_index_max] = 0
        prm = PhysParams(alpha=1.0, nu_x=0.01, nu_y=0.01, kappa_x=0.01)
        state = SimState.from_arrays(p1, g.zeros(), 0.0, prm, g)
        hn = []
        simulate(state, 5.0, dt_max=0.25, callback=lambda s, r: hn.append(energy_report(s).hn_p1))
        assert np.all(np.diff(hn) < 0)


class TestDampingSymbol:
    def test_critical_layer_value(self):
        for t in (0.5, 3.0, 40.0):
            assert damping_symbol(t, 1, t) == pytest.approx(1 / math.sqrt(1 + t * t))

    def test_origin(self):
        assert damping_symbol(0.0, 2, 0.0) == pytest.approx(1.0)

    @given(st.floats(0.01, 1e3), st.integers(1, 20), st.floats(-1e3, 1e3))
    def test_pointwise_bound(self, t, k, xi):
        assert t * damping_symbol(t, k, xi) <= 2.0 + 1e-12

    def test_lattice_sup(self):
        g = GridSpec()
        vals = [damping_symbol_sup(t, g) for t in (1.0, 10.0, 100.0, 1000.0)]
        assert all(v <= 2.0 for v in vals)
        assert vals[0] == pytest.approx(0.8, rel=1e-12)

    def test_maximizer_location(self):
        t = 10.0
        g = GridSpec(5, 641, 8 * math.pi)
        k, xi, val = damping_symbol_argmax(t, g)
        assert abs(k) * abs(t) < g.xi_index_max * g.dxi
        near = min(abs(xi), abs(xi - k * t))
        assert near <= g.dxi + abs(k) / t
        assert val == pytest.approx(float(np.max(
            damping_symbol(t, np.where(g.k != 0, g.k, 1.0), g.xi)[g.k[:, 0] != 0])))

    def test_invalid(self):
        with pytest.raises(ValueError):
            damping_symbol_sup(0.0, GridSpec())
        with pytest.raises(ValueError):
            damping_symbol_sup(1.0, GridSpec(1, 9))


class TestLmu:
    def test_profile_values(self):
        assert lmu_profile(0.0) == 0.0
        assert lmu_profile(1.0) == pytest.approx(3 / 2 ** 1.5)
        assert lmu_profile(1e6) == pytest.approx(1.0, abs=1e-9)

    def test_supremum(self):
        s, val = lmu_sup_argmax()
        assert s == pytest.approx(math.sqrt(2), abs=1e-6)
        assert val == pytest.approx(4 * math.sqrt(2) / (3 * math.sqrt(3)), abs=1e-12)
        assert lmu_sup_constant() == pytest.approx(1.0886621, abs=1e-3)

    def test_exceeds_two_thirds_root(self):
        # recorded finding: the supremum is above sqrt(2/3)
        assert lmu_sup_constant() > math.sqrt(2 / 3)


class TestRegions:
    @pytest.mark.parametrize("out, inp, tag", [
        ((10, 0.0), (10, 0.5), RegionTag.TRANSPORT),
        ((10, 0.0), (0, 1.0), RegionTag.REACTION),
        ((1, 0.0), (10, 0.0), RegionTag.REMAINDER),
        ((9, 0.0), (8, 0.0), RegionTag.REMAINDER),
        ((9, 0.0), (1, 0.0), RegionTag.REMAINDER),
    ])
    def test_examples(self, out, inp, tag):
        assert classify_region(out, inp) is tag

    @given(st.integers(-30, 30), st.floats(-50, 50), st.integers(-30, 30), st.floats(-50, 50))
    def test_partition(self, k, xi, l, eta):
        diff = math.hypot(k - l, xi - eta)
        inp = math.hypot(l, eta)
        transport, reaction = 8 * diff < inp, 8 * inp < diff
        assert not (transport and reaction)
        tag = classify_region((k, xi), (l, eta))
        expect = (RegionTag.TRANSPORT if transport else
                  RegionTag.REACTION if reaction else RegionTag.REMAINDER)
        assert tag is expect


def report(t, **kw):
    base = dict(t=t, hn_p1=0.0, hn_p2=0.0, lf_p1=0.0, lf_p2=0.0, diss_p1=0.0, diss_p2=0.0,
                mdot_p1=0.0, mdot_p2=0.0, cross_E=0.0, avg_b_norm=0.0)
    base.update(kw)
    return EnergyReport(**base)


class TestTimeIntegrals:
    def test_constant_and_linear(self):
        ts = np.linspace(1.0, 5.0, 9)
        reps = [report(t, diss_p1=2.0, diss_p2=t, mdot_p1=3.0) for t in ts]
        out = dissipation_time_integrals(reps, fluct=[(1.0, t) for t in ts])
        assert out.t_span == 4.0
        assert out.diss_p1 == pytest.approx(8.0)
        assert out.diss_p2 == pytest.approx(12.0)
        assert out.mdot_p1 == pytest.approx(12.0) and out.mdot_p2 == 0.0
        assert out.fluct_p1 == pytest.approx(4.0) and out.fluct_p2 == pytest.approx(12.0)

    def test_degenerate(self):
        assert dissipation_time_integrals([]) == DissipationIntegrals(0, 0, 0, 0, 0, 0, 0)
        assert dissipation_time_integrals([report(1.0, diss_p1=5.0)]).diss_p1 == 0.0
        with pytest.raises(ValueError):
            dissipation_time_integrals([report(1.0), report(1.0)])

    def test_scaling(self):
        out = DissipationIntegrals(1.0, 2.0, 0.0, 4.0, 0.0, 0.0, 0.0)
        sc = out.scaled(0.01, 0.01)
        assert sc["diss_p1"] == pytest.approx(200.0) and sc["mdot_p1"] == pytest.approx(400.0)
        assert sc["diss_p2"] == 0.0


def test_fluctuation_norms_ignore_average():
    g = GridSpec(9, 17)
    p1 = SpectralField.point_mass(g, 0, g.dxi).realified()
    state = SimState(p1, p1, 0.0, PhysParams(), g)
    assert fluctuation_norms(state) == (0.0, 0.0)
    st_ = single_mode_state()
    f1, f2 = fluctuation_norms(st_)
    assert f1 == pytest.approx(energy_report(st_).hn_p1 ** 2) and f2 == 0.0
