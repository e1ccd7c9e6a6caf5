import math

import numpy as np
import pytest

from jpaopt.circuits import PolynomialBlock, polynomial_cpr
from jpaopt.drive import degenerate_drive
from jpaopt.errors import ConfigError, UnsaturatedWarning
from jpaopt.metrics import (
    GainEvaluator,
    SpectrumResult,
    find_saturation,
    gain_at,
    gain_curve,
    ip3,
    nondegenerate_pae_from_degenerate,
    nondegenerate_pae_limit,
    power_added_efficiency,
    power_spectrum,
)
from jpaopt.metrics import _fixed_slope_fit
from jpaopt.timedomain import integrate_eom, make_schedule

ORDER6 = PolynomialBlock(1.5444, 0.8642, (1.1221, 1.2617, 0.9072, 0.2224))
LINEAR = PolynomialBlock(1.3, 0.7, (0.0, 1e-30))


class TestGainPoints:
    def test_linear_amplifier_reflects_without_gain(self):
        cpr = polynomial_cpr(LINEAR)
        drive = degenerate_drive(0.0, a_pump=0.0)
        pt = gain_at(cpr, LINEAR.damping, drive.with_signal_amplitude(0.1), 0.1)
        assert pt.gain == pytest.approx(1.0, abs=1e-9)
        assert pt.eta == 0.0

    def test_pae_formula_identity(self):
        # eta * wp^2 Ap^2 == (G-1) ws^2 As^2 to machine precision
        cpr = polynomial_cpr(ORDER6)
        drive = degenerate_drive(0.0)
        ev = GainEvaluator(cpr, ORDER6.damping, drive)
        for a_s in (0.01, 0.05, 0.08):
            pt = ev.point(a_s)
            lhs = pt.eta * (2.0 * 0.5) ** 2
            rhs = (pt.gain - 1.0) * (1.0 * a_s) ** 2
            assert lhs == pytest.approx(rhs, rel=1e-14)

    def test_normalized_pump_power_is_unity(self):
        # in normalized units the pump carries power Ap^2 wp^2 = 1
        assert (0.5 * 2.0) ** 2 == 1.0
        assert power_added_efficiency(101.0, 0.08, 1.0, 0.5, 2.0) == pytest.approx(
            100.0 * 0.08**2
        )

    def test_zero_amplitude_takes_small_signal_limit(self):
        cpr = polynomial_cpr(ORDER6)
        drive = degenerate_drive(0.0)
        pt = gain_at(cpr, ORDER6.damping, drive, 0.0)
        assert pt.a_s == pytest.approx(1e-4 * 0.5)
        assert pt.gain_db == pytest.approx(20.105, abs=0.01)

    def test_small_signal_gain_insensitive_to_halving(self):
        cpr = polynomial_cpr(ORDER6)
        drive = degenerate_drive(0.0)
        ev = GainEvaluator(cpr, ORDER6.damping, drive)
        a = ev.small_signal_amplitude()
        assert abs(ev.gain_db(a) - ev.gain_db(a / 2.0)) < 0.01

    def test_phase_sweep_peaks_near_three_half_pi(self):
        # small-signal degenerate gain versus pump-signal phase
        cpr = polynomial_cpr(ORDER6)
        deltas = np.linspace(0.0, 2.0 * math.pi, 33)
        gains = []
        for d in deltas:
            drive = degenerate_drive(0.0, delta=float(d))
            gains.append(gain_at(cpr, ORDER6.damping, drive, 0.0).gain_db)
        best = deltas[int(np.argmax(gains))]
        assert abs(best - 1.5 * math.pi) < math.pi / 4.0
        g_at_fixed = gains[int(np.argmin(np.abs(deltas - 1.5 * math.pi)))]
        assert max(gains) - g_at_fixed < 0.5


class TestSaturation:
    def test_flat_gain_warns_unsaturated(self):
        with pytest.warns(UnsaturatedWarning):
            a = find_saturation(lambda a: 20.0, 20.0, ceiling=1.0)
        assert a is None

    def test_quadratic_compression_crossing(self):
        sampler = lambda a: 20.0 - (a / 0.1) ** 2
        a = find_saturation(sampler, 20.0, a_start=1e-3, ceiling=1.0)
        assert a == pytest.approx(0.1, rel=1e-4)

    def test_out_of_band_from_the_start(self):
        a = find_saturation(lambda a: 30.0, 20.0, ceiling=1.0)
        assert a == 0.0

    def test_reference_order4_saturation(self):
        block = PolynomialBlock(1.4661, 0.6879, (0.7307, 0.1397))
        cpr = polynomial_cpr(block)
        drive = degenerate_drive(0.0)
        curve = gain_curve(cpr, block.damping, drive, g_target_db=20.0)
        assert curve.a_sat == pytest.approx(0.0783, rel=5e-3)
        assert curve.eta_pae == pytest.approx(0.480, abs=0.01)

    def test_curve_respects_band_parameter(self):
        cpr = polynomial_cpr(ORDER6)
        drive = degenerate_drive(0.0)
        narrow = gain_curve(cpr, ORDER6.damping, drive, band_db=0.5)
        wide = gain_curve(cpr, ORDER6.damping, drive, band_db=1.0)
        assert narrow.a_sat < wide.a_sat


class TestNondegenerateRelations:
    def test_limit_formula(self):
        assert nondegenerate_pae_limit(0.6, 100.0) == pytest.approx(0.6 * 96.0 / 396.0)

    def test_bound_is_quarter(self):
        # even a perfect constant-efficiency amplifier caps at 25%
        for g in (10.0, 100.0, 1e4, 1e8):
            assert nondegenerate_pae_limit(1.0, g) <= 0.25 + 1e-12

    def test_finite_splitting_approaches_limit(self):
        eta, g, ws = 0.63, 100.0, 1.0
        limit = nondegenerate_pae_limit(eta, g)
        val = nondegenerate_pae_from_degenerate(eta, g, ws, 1e-9)
        assert val == pytest.approx(limit, rel=1e-6)

    def test_monotone_increase_toward_quarter_for_constant_eta(self):
        gs = np.array([5.0, 10.0, 100.0, 1e4])
        vals = [nondegenerate_pae_limit(1.0, g) for g in gs]
        assert all(b > a for a, b in zip(vals, vals[1:]))
        assert vals[-1] == pytest.approx(0.25, rel=1e-3)


class TestSpectrum:
    def test_single_line_for_linear_reflector(self):
        cpr = polynomial_cpr(LINEAR)
        drive = degenerate_drive(0.2, a_pump=0.0)
        sched = make_schedule(drive, min_periods=200)
        sol = integrate_eom(cpr, LINEAR.damping, drive, sched)
        spec = power_spectrum(sol, max_omega=6.0)
        # outgoing power concentrates in the signal bin
        psig = spec.power_at(1.0)
        others = spec.power[(spec.omegas > 0.1) & (np.abs(spec.omegas - 1.0) > 0.01)]
        assert psig > 1e6 * np.max(others)

    def test_pump_only_drive_has_no_signal_band_content(self):
        cpr = polynomial_cpr(ORDER6)
        drive = degenerate_drive(0.0, a_pump=0.5, delta=1.5 * math.pi)
        sched = make_schedule(drive, min_periods=400)
        sol = integrate_eom(cpr, ORDER6.damping, drive, sched)
        spec = power_spectrum(sol, max_omega=9.0)
        # scan all bins: everything except pump harmonics (and DC) is floor
        idx = np.argsort(spec.power)[::-1]
        top = spec.omegas[idx[:6]]
        for w in top:
            if spec.power_at(w) < 1e-18:
                continue
            assert (
                min(abs(w - 2.0 * k) for k in range(0, 5)) < 1e-9
            ), f"unexpected tone at {w}"
        labels = set(spec.labels.values())
        assert "pump" in labels

    def test_dbm_requires_physical_context(self):
        cpr = polynomial_cpr(LINEAR)
        drive = degenerate_drive(0.2, a_pump=0.0)
        sched = make_schedule(drive, min_periods=100)
        sol = integrate_eom(cpr, LINEAR.damping, drive, sched)
        spec = power_spectrum(sol, ctx=None)
        assert spec.unit == "normalized"


class TestIp3Fitting:
    def test_fixed_slope_fits_recover_synthetic_intercepts(self):
        # synthetic series with known slope-1/slope-3 lines
        p_in = np.arange(-127.0, -101.0 + 1e-9, 2.0)
        c1, c3 = 19.6, 206.1
        y1 = p_in + c1
        y3 = 3.0 * p_in + c3
        i1, r1 = _fixed_slope_fit(p_in[2:10], y1[2:10], 1.0)
        i3, r3 = _fixed_slope_fit(p_in[2:10], y3[2:10], 3.0)
        assert i1 == pytest.approx(c1, abs=1e-12)
        assert i3 == pytest.approx(c3, abs=1e-12)
        assert r1 < 1e-12 and r3 < 1e-12
        iip3 = (i1 - i3) / 2.0
        oip3 = iip3 + i1
        assert iip3 == pytest.approx((c1 - c3) / 2.0)
        assert oip3 == pytest.approx((c1 - c3) / 2.0 + c1)
