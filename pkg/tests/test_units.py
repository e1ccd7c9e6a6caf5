import math

import pytest

from jpaopt.errors import ConfigError
from jpaopt.units import PHI0, UnitContext, db, from_db


def test_phi0_value():
    # hbar / 2e in webers
    assert PHI0 == pytest.approx(3.29106e-16, rel=1e-5)


@pytest.fixture
def ctx():
    return UnitContext(c_farads=0.5e-12, z_ohms=131.0, f_pump_hz=12e9)


def test_damping_rate_impedance_consistency(ctx):
    assert ctx.k_rate == pytest.approx(1.0 / (0.5e-12 * 131.0))
    # normalized pump frequency is 2 by construction
    assert ctx.omega_to_normalized(ctx.omega_pump) == pytest.approx(2.0)
    assert ctx.omega_to_physical(2.0) == pytest.approx(2.0 * math.pi * 12e9)


def test_dbm_round_trip(ctx):
    amp = ctx.amplitude_for_dbm(-72.3, 2.0)
    assert ctx.power_dbm(amp, 2.0) == pytest.approx(-72.3, abs=1e-12)
    # the reference degenerate operating point maps to a ~5 phi0 pump
    assert amp == pytest.approx(5.0056, rel=1e-3)


def test_power_scales_quadratically(ctx):
    p1 = ctx.power_watts(1.0, 1.0)
    assert ctx.power_watts(2.0, 1.0) == pytest.approx(4.0 * p1)
    assert ctx.power_watts(1.0, 2.0) == pytest.approx(4.0 * p1)


def test_db_helpers():
    assert db(100.0) == pytest.approx(20.0)
    assert from_db(20.0) == pytest.approx(100.0)


def test_invalid_context_rejected():
    with pytest.raises(ConfigError):
        UnitContext(-1e-12, 50.0, 1e9)
    with pytest.raises(ConfigError):
        UnitContext(1e-12, 50.0, 0.0)
