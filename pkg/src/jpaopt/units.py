"""Unit system and physical/normalized conversions.

All solvers work in normalized units: time is rescaled so the pump angular
frequency equals 2, and fluxes are dimensionless (phases, i.e. flux over the
reduced flux quantum).  A :class:`UnitContext` records the physical scales of
a circuit so amplitudes and frequencies can be mapped to watts/dBm and hertz.

Wave power convention: a travelling wave of flux amplitude ``A`` (in units of
``phi0``) at physical angular frequency ``w`` on a line of impedance ``Z``
carries ``P = phi0^2 A^2 w^2 / (2 Z)`` watts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import constants

from .errors import ConfigError

#: Reduced magnetic flux quantum hbar / 2e, in webers.
PHI0 = constants.hbar / (2.0 * constants.e)

#: Pump angular frequency in normalized time units.
OMEGA_PUMP_NORM = 2.0

#: Pump amplitude in normalized polynomial-amplifier units (pump power = 1).
PUMP_AMPLITUDE_NORM = 0.5


@dataclass(frozen=True)
class UnitContext:
    """Physical scales of a circuit amplifier.

    Parameters
    ----------
    c_farads : float
        Shunt capacitance.
    z_ohms : float
        Transmission-line impedance seen by the amplifier.
    f_pump_hz : float
        Pump frequency in hertz (not angular).
    """

    c_farads: float
    z_ohms: float
    f_pump_hz: float

    def __post_init__(self):
        if self.c_farads <= 0 or self.z_ohms <= 0 or self.f_pump_hz <= 0:
            raise ConfigError("unit context requires positive C, Z and pump frequency")

    @property
    def omega_pump(self) -> float:
        """Physical pump angular frequency, rad/s."""
        return 2.0 * math.pi * self.f_pump_hz

    @property
    def k_rate(self) -> float:
        """Damping rate 1/(C Z), rad/s."""
        return 1.0 / (self.c_farads * self.z_ohms)

    @property
    def time_scale(self) -> float:
        """Seconds per normalized time unit (pump frequency maps to 2)."""
        return OMEGA_PUMP_NORM / self.omega_pump

    @property
    def k_normalized(self) -> float:
        """Damping rate in normalized time units."""
        return self.k_rate * self.time_scale

    def omega_to_physical(self, omega_norm: float) -> float:
        return omega_norm / self.time_scale

    def omega_to_normalized(self, omega_phys: float) -> float:
        return omega_phys * self.time_scale

    def frequency_hz(self, omega_norm: float) -> float:
        return self.omega_to_physical(omega_norm) / (2.0 * math.pi)

    def power_watts(self, amplitude: float, omega_norm: float) -> float:
        """Travelling-wave power for a flux amplitude in phi0 units."""
        w = self.omega_to_physical(omega_norm)
        return (PHI0 * abs(amplitude) * w) ** 2 / (2.0 * self.z_ohms)

    def power_dbm(self, amplitude: float, omega_norm: float) -> float:
        p = self.power_watts(amplitude, omega_norm)
        if p <= 0.0:
            return -math.inf
        return 10.0 * math.log10(p * 1e3)

    def amplitude_for_dbm(self, p_dbm: float, omega_norm: float) -> float:
        """Flux amplitude (phi0 units) of a wave carrying ``p_dbm`` at ``omega_norm``."""
        p = 10.0 ** (p_dbm / 10.0) * 1e-3
        w = self.omega_to_physical(omega_norm)
        return math.sqrt(2.0 * self.z_ohms * p) / (PHI0 * w)

    def as_dict(self) -> dict:
        return {
            "c_farads": self.c_farads,
            "z_ohms": self.z_ohms,
            "f_pump_hz": self.f_pump_hz,
        }


def db(power_ratio: float) -> float:
    return 10.0 * math.log10(power_ratio)


def from_db(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)
