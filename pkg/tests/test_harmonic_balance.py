import math
from fractions import Fraction

import numpy as np
import pytest

from jpaopt.circuits import PolynomialBlock, polynomial_cpr, rf_squid_chain_cpr, RfSquidChain
from jpaopt.drive import degenerate_drive, nondegenerate_drive
from jpaopt.errors import ConfigError, LadderTruncationError, NonconvergenceError
from jpaopt.harmonic_balance import (
    HarmonicLadder,
    HarmonicState,
    _HbSystem,
    hb_continuation_sweep,
    hb_solve,
    ladder_for_drive,
)
from jpaopt.timedomain import extract_tone, integrate_eom, make_schedule

ORDER6 = PolynomialBlock(1.5444, 0.8642, (1.1221, 1.2617, 0.9072, 0.2224))
LINEAR = PolynomialBlock(1.3, 0.7, (0.0, 1e-30))


class TestLadder:
    def test_degenerate_modes(self):
        lad = HarmonicLadder.degenerate(1.0, 6)
        assert lad.modes[0] == (0,)
        assert lad.modes[-1] == (6,)
        np.testing.assert_allclose(lad.frequencies(), np.arange(7.0))

    def test_nondegenerate_retained_set(self):
        # pump harmonics N w_p and single-photon sidebands N w_p +- w_s
        wp, ws = 2.0, 2.0 * 125 / 249
        lad = HarmonicLadder.nondegenerate(wp, ws, n_pump=3)
        freqs = set(np.round(lad.frequencies(), 9))
        expected = {0.0}
        expected |= {round(n * wp, 9) for n in (1, 2, 3)}
        expected |= {round(n * wp + ws, 9) for n in (0, 1, 2, 3)}
        expected |= {round(n * wp - ws, 9) for n in (1, 2, 3)}
        assert freqs == expected

    def test_half_pump_signal_collides(self):
        with pytest.raises(ConfigError):
            HarmonicLadder.nondegenerate(2.0, 1.0)

    def test_auto_ladder_choice(self):
        assert len(ladder_for_drive(degenerate_drive(0.1)).fundamentals) == 1
        nd = nondegenerate_drive(0.1, 1.0, Fraction(125, 249))
        assert len(ladder_for_drive(nd).fundamentals) == 2

    def test_serialization_round_trip(self):
        lad = HarmonicLadder.degenerate(1.0, 4)
        state = HarmonicState(
            ladder=lad,
            coeffs=np.arange(5, dtype=complex) * (0.1 + 0.05j),
            residual_norm=1e-12,
            iterations=3,
            converged=True,
        )
        back = HarmonicState.from_dict(state.as_dict())
        np.testing.assert_allclose(back.coeffs, state.coeffs)
        assert back.ladder.modes == lad.modes


class TestSolve:
    def test_zero_drive_gives_zero_solution(self):
        cpr = polynomial_cpr(ORDER6)
        st = hb_solve(cpr, ORDER6.damping, degenerate_drive(0.0, a_pump=0.0))
        assert np.max(np.abs(st.coeffs)) < 1e-12
        assert st.residual_norm < 1e-12

    def test_linear_drive_solved_in_one_newton_step(self):
        cpr = polynomial_cpr(LINEAR)
        drive = degenerate_drive(0.1, a_pump=0.0)
        st = hb_solve(cpr, LINEAR.damping, drive)
        assert st.iterations <= 2
        # matches the closed-form linear coefficient solution
        w = 1.0
        k = LINEAR.damping
        h = 2j * k * w / (LINEAR.omega0**2 - w**2 + 1j * k * w)
        assert st.amplitude_at(1.0) == pytest.approx(h * (-1j * 0.1), abs=1e-12)

    def test_degenerate_gain_matches_time_domain(self):
        cpr = polynomial_cpr(ORDER6)
        drive = degenerate_drive(0.02)
        st = hb_solve(cpr, ORDER6.damping, drive)
        g_hb = abs(st.outgoing_amplitude(1.0, drive)) / 0.02
        sched = make_schedule(drive, min_periods=600)
        sol = integrate_eom(cpr, ORDER6.damping, drive, sched)
        g_ti = abs(extract_tone(sol, 1.0)) / 0.02
        assert g_hb == pytest.approx(g_ti, rel=1e-4)

    def test_ladder_robustness(self):
        # four extra harmonics change the extracted gain by < 0.1%
        cpr = polynomial_cpr(ORDER6)
        drive = degenerate_drive(0.05)
        gains = []
        for n in (20, 24):
            st = hb_solve(cpr, ORDER6.damping, drive, ladder=HarmonicLadder.degenerate(1.0, n))
            gains.append(abs(st.outgoing_amplitude(1.0, drive)) ** 2 / 0.05**2)
        assert abs(gains[1] - gains[0]) / gains[0] < 1e-3

    def test_small_ladder_raises_truncation_error(self):
        cpr = polynomial_cpr(ORDER6)
        drive = degenerate_drive(0.08)
        with pytest.raises(LadderTruncationError):
            hb_solve(cpr, ORDER6.damping, drive, ladder=HarmonicLadder.degenerate(1.0, 6))

    def test_jacobian_matches_finite_differences(self):
        cpr = polynomial_cpr(ORDER6)
        drive = degenerate_drive(0.04)
        ladder = HarmonicLadder.degenerate(1.0, 8)
        sys = _HbSystem(cpr, ORDER6.damping, drive, ladder)
        x = sys.linear_guess() + 0.01
        jac = sys.jacobian(x)
        h = 1e-7
        for col in (0, 3, 11):
            xp = x.copy()
            xm = x.copy()
            xp[col] += h
            xm[col] -= h
            fd = (sys.residual(xp) - sys.residual(xm)) / (2 * h)
            np.testing.assert_allclose(jac[:, col], fd, rtol=2e-5, atol=1e-7)

    def test_nondegenerate_small_signal(self):
        chain = RfSquidChain(
            n=10,
            inductance=18.1e-12,
            critical_current=18.1e-6,
            phi_ext=3.09,
            capacitance=0.5e-12,
            k_rate=1.0 / (0.5e-12 * 135.0),
        )
        cpr = rf_squid_chain_cpr(chain, 12e9)
        ctx = chain.context(12e9)
        a_p = ctx.amplitude_for_dbm(-72.4, 2.0)
        drive = nondegenerate_drive(1e-4 * a_p, a_p, Fraction(125, 249))
        st = hb_solve(cpr, ctx.k_normalized, drive)
        assert st.converged
        # single-photon truncation: discarded sideband energy tiny for small signal
        assert st.leakage < 1e-6


class TestContinuation:
    def test_single_amplitude_equals_plain_solve(self):
        cpr = polynomial_cpr(ORDER6)
        drive = degenerate_drive(0.0)
        states = hb_continuation_sweep(cpr, ORDER6.damping, drive, [0.03])
        direct = hb_solve(cpr, ORDER6.damping, drive.with_signal_amplitude(0.03))
        np.testing.assert_allclose(states[0].coeffs, direct.coeffs, atol=1e-10)

    def test_unsorted_amplitudes_rejected(self):
        cpr = polynomial_cpr(ORDER6)
        with pytest.raises(ConfigError):
            hb_continuation_sweep(cpr, ORDER6.damping, degenerate_drive(0.0), [0.05, 0.01])

    def test_reversed_sweep_agrees_with_forward(self):
        # no hysteresis for these designs: reaching an amplitude from above
        # or below gives the same branch
        cpr = polynomial_cpr(ORDER6)
        drive = degenerate_drive(0.0)
        amps = np.linspace(0.01, 0.08, 8)
        fwd = hb_continuation_sweep(cpr, ORDER6.damping, drive, amps)
        # walk down manually with warm starts
        prev = None
        back = {}
        for a in amps[::-1]:
            prev = hb_solve(
                cpr,
                ORDER6.damping,
                drive.with_signal_amplitude(a),
                ladder=fwd[0].ladder,
                warm_start=prev,
            )
            back[a] = prev
        for a, st in zip(amps, fwd):
            g_f = abs(st.outgoing_amplitude(1.0, drive.with_signal_amplitude(a)))
            g_b = abs(back[a].outgoing_amplitude(1.0, drive.with_signal_amplitude(a)))
            assert g_f == pytest.approx(g_b, rel=1e-6)

    def test_failure_reports_sweep_index(self):
        cpr = polynomial_cpr(ORDER6)
        drive = degenerate_drive(0.0)
        with pytest.raises((NonconvergenceError, LadderTruncationError)) as err:
            hb_continuation_sweep(
                cpr,
                ORDER6.damping,
                drive,
                [0.01, 0.05, 0.3],
                ladder=HarmonicLadder.degenerate(1.0, 6),
            )
        assert "sweep index" in str(err.value)
