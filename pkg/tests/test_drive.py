import math
from fractions import Fraction

import numpy as np
import pytest

from jpaopt.drive import (
    DriveSpec,
    Tone,
    degenerate_drive,
    nondegenerate_drive,
    two_tone_drive,
)
from jpaopt.errors import ConfigError, IncommensurableError


def test_degenerate_frequencies():
    d = degenerate_drive(0.05)
    assert d.omega_signal == 1.0
    assert d.omega_pump == 2.0
    assert d.is_degenerate
    assert d.omega_idler == pytest.approx(1.0)
    assert d.delta_omega == pytest.approx(0.0)


def test_nondegenerate_frequencies():
    d = nondegenerate_drive(0.01, 5.0, Fraction(125, 249))
    assert d.signal.ratio == Fraction(250, 249)
    assert not d.is_degenerate
    assert d.omega_idler == pytest.approx(248.0 / 249.0)
    assert d.delta_omega == pytest.approx((d.omega_signal - d.omega_idler) / 2.0)


def test_phi_in_composition():
    d = degenerate_drive(0.3, a_pump=0.5, delta=1.5 * math.pi)
    t = np.linspace(0.0, 7.0, 111)
    expected = 0.3 * np.sin(t) + 0.5 * np.sin(2 * t + 1.5 * math.pi)
    np.testing.assert_allclose(d.phi_in(t), expected, atol=1e-15)
    h = 1e-6
    approx = (d.phi_in(t + h) - d.phi_in(t - h)) / (2 * h)
    np.testing.assert_allclose(d.dphi_in(t), approx, atol=1e-7)


def test_scalar_derivative_closure_matches_vectorized():
    d = two_tone_drive(0.01, 4.0, Fraction(101, 201), Fraction(101, 200))
    din = d.dphi_in_scalar()
    for t in (0.0, 0.37, 12.9):
        assert din(t) == pytest.approx(float(d.dphi_in(t)), abs=1e-14)


def test_tone_bin_amplitude_convention():
    # A sin(w t + ph) -> -i A e^{i ph}: modulus A, pure sine phase -pi/2
    d = degenerate_drive(0.25, a_pump=0.5, delta=0.7)
    a_sig = d.tone_bin_amplitude(1.0)
    assert abs(a_sig) == pytest.approx(0.25)
    assert np.angle(a_sig) == pytest.approx(-math.pi / 2)
    a_pump = d.tone_bin_amplitude(2.0)
    assert abs(a_pump) == pytest.approx(0.5)
    assert np.angle(a_pump) == pytest.approx(-math.pi / 2 + 0.7)
    assert d.tone_bin_amplitude(1.5) == 0.0


def test_amplitude_replacement_preserves_other_tones():
    d = degenerate_drive(0.1, a_pump=0.5, delta=0.3)
    d2 = d.with_signal_amplitude(0.2)
    assert d2.signal.amplitude == 0.2
    assert d2.pump.amplitude == 0.5
    assert d.signal.amplitude == 0.1  # original untouched
    d3 = d.with_pump_scaled(2.0)
    assert d3.pump.amplitude == pytest.approx(1.0)


def test_irrational_ratio_rejected():
    with pytest.raises(IncommensurableError):
        Tone(1.0, 0.123)
    # integral floats are allowed
    assert Tone(1.0, 2.0).ratio == Fraction(2)


def test_two_tone_validation():
    with pytest.raises(ConfigError):
        two_tone_drive(0.1, 1.0, Fraction(1, 2), Fraction(1, 2))
    d = two_tone_drive(0.1, 1.0)
    assert len(d.all_tones()) == 3
    d2 = d.with_two_signal_tones(0.05)
    assert d2.signal.amplitude == 0.05
    assert d2.extra[0].amplitude == 0.05
