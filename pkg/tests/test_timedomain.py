import math
from fractions import Fraction

import numpy as np
import pytest

from jpaopt.circuits import PolynomialBlock, polynomial_cpr
from jpaopt.drive import degenerate_drive, nondegenerate_drive, two_tone_drive
from jpaopt.errors import ToneBinError
from jpaopt.timedomain import (
    SteadyStateSolution,
    extract_tone,
    integrate_eom,
    linear_response_amplitude,
    make_schedule,
)

LINEAR = PolynomialBlock(1.3, 0.7, (0.0, 1e-30))  # effectively linear, stable leading term


class TestSchedule:
    def test_single_tone(self):
        d = degenerate_drive(0.1, a_pump=0.0)
        s = make_schedule(d, min_periods=100)
        assert s.t_min == pytest.approx(2.0 * math.pi)
        assert s.total_time >= 100 * 2.0 * math.pi

    def test_degenerate_t_min_is_signal_period(self):
        d = degenerate_drive(0.1)
        s = make_schedule(d)
        # one signal period covers two pump periods
        assert s.t_min == pytest.approx(2.0 * math.pi)

    def test_nondegenerate_reference_ratio(self):
        d = nondegenerate_drive(0.01, 1.0, Fraction(125, 249))
        s = make_schedule(d)
        pump_period = math.pi
        assert s.t_min == pytest.approx(249 * pump_period)
        signal_period = 2.0 * math.pi / d.omega_signal
        assert s.t_min / signal_period == pytest.approx(125.0)

    def test_minimum_periods_for_every_tone(self):
        d = nondegenerate_drive(0.01, 1.0, Fraction(125, 249))
        s = make_schedule(d, min_periods=2000)
        for tone in d.all_tones():
            period = 2.0 * math.pi / tone.omega(d.base_omega)
            assert s.total_time >= 2000 * period - 1e-9

    def test_window_is_multiple_of_t_min(self):
        d = two_tone_drive(0.01, 1.0)
        s = make_schedule(d, min_periods=2000, ip3_mode=True)
        assert s.window_multiple == 2
        ratio = s.window / s.t_min
        assert ratio == pytest.approx(round(ratio))

    def test_sampling_rate(self):
        d = degenerate_drive(0.1)
        s = make_schedule(d, min_periods=2000, samples_per_signal_period=50)
        signal_period = 2.0 * math.pi
        assert s.window / s.n_samples == pytest.approx(signal_period / 50.0)


class TestIntegration:
    def test_zero_drive_stays_at_rest(self):
        cpr = polynomial_cpr(PolynomialBlock(1.5, 0.8, (0.5, 0.1)))
        d = degenerate_drive(0.0, a_pump=0.0)
        s = make_schedule(d, min_periods=50)
        sol = integrate_eom(cpr, 0.8, d, s)
        assert np.max(np.abs(sol.phi)) < 1e-12

    def test_linear_response_matches_transfer_function(self):
        cpr = polynomial_cpr(LINEAR)
        d = degenerate_drive(0.2, a_pump=0.0)
        s = make_schedule(d, min_periods=400)
        sol = integrate_eom(cpr, LINEAR.damping, d, s)
        amp = sol.amplitude_at(1.0)
        expected = linear_response_amplitude(LINEAR.omega0, LINEAR.damping, 1.0, 0.2)
        assert abs(amp) == pytest.approx(expected, rel=1e-6)

    def test_linear_reflection_is_lossless(self):
        cpr = polynomial_cpr(LINEAR)
        d = degenerate_drive(0.2, a_pump=0.0)
        s = make_schedule(d, min_periods=400)
        sol = integrate_eom(cpr, LINEAR.damping, d, s)
        out = extract_tone(sol, 1.0)
        gain_db = 20.0 * math.log10(abs(out) / 0.2)
        assert abs(gain_db) < 1e-5

    def test_parseval_consistency(self):
        cpr = polynomial_cpr(PolynomialBlock(1.5444, 0.8642, (1.1221, 1.2617, 0.9072, 0.2224)))
        d = degenerate_drive(0.05)
        s = make_schedule(d, min_periods=300)
        sol = integrate_eom(cpr, 0.8642, d, s)
        assert sol.parseval_residual() < 1e-6

    def test_transient_fully_decayed_when_doubling_repetitions(self):
        cpr = polynomial_cpr(PolynomialBlock(1.5444, 0.8642, (1.1221, 1.2617, 0.9072, 0.2224)))
        d = degenerate_drive(0.05)
        amps = {}
        for periods in (500, 1000):
            s = make_schedule(d, min_periods=periods)
            sol = integrate_eom(cpr, 0.8642, d, s)
            amps[periods] = extract_tone(sol, 1.0)
        rel = abs(amps[1000] - amps[500]) / abs(amps[1000])
        assert rel < 1e-4


class TestExtraction:
    def _pure_sine_solution(self, amp=0.7, omega=1.0, phase=0.0):
        d = degenerate_drive(0.0, a_pump=0.0)
        s = make_schedule(d, min_periods=64)
        t = s.sample_times()
        return SteadyStateSolution(
            times=t, phi=amp * np.sin(omega * t + phase), schedule=s, drive=d
        )

    def test_sine_amplitude_and_phase_convention(self):
        sol = self._pure_sine_solution(amp=0.7)
        a = sol.amplitude_at(1.0)
        assert abs(a) == pytest.approx(0.7, rel=1e-12)
        assert np.angle(a) == pytest.approx(-math.pi / 2, abs=1e-9)

    def test_phase_referenced_to_absolute_time(self):
        sol = self._pure_sine_solution(amp=0.5, phase=0.9)
        a = sol.amplitude_at(1.0)
        assert np.angle(a) == pytest.approx(-math.pi / 2 + 0.9, abs=1e-9)

    def test_off_bin_frequency_rejected(self):
        sol = self._pure_sine_solution()
        with pytest.raises(ToneBinError):
            sol.amplitude_at(1.0001)
        with pytest.raises(ToneBinError):
            extract_tone(sol, 1.0 + 0.4 * 2 * math.pi / sol.schedule.window)

    def test_outgoing_subtracts_the_input_wave(self):
        d = degenerate_drive(0.4, a_pump=0.0)
        s = make_schedule(d, min_periods=64)
        t = s.sample_times()
        sol = SteadyStateSolution(times=t, phi=d.phi_in(t), schedule=s, drive=d)
        assert abs(sol.outgoing_amplitude(1.0)) < 1e-12
