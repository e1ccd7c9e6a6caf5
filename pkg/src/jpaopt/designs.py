"""Bundled reference amplifier designs.

These parameter sets are tuned 20 dB designs used by the CLI presets and the
validation suite: four polynomial blocks of increasing nonlinear order, and
loop-chain circuits (plain and junction-shunted) in degenerate and
nondegenerate operation.  Circuit gains near threshold move by decibels for
sub-percent parameter changes, so quoted operating points are reproduced by
re-tuning the pump power around the listed value (see
:func:`jpaopt.metrics.calibrate_pump`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

from .circuits import (
    CurrentPhaseRelation,
    ExtendedRfSquidElement,
    PolynomialBlock,
    RfSquidChain,
    extended_rf_squid_block_cpr,
    rf_squid_chain_cpr,
)
from .drive import DriveSpec, degenerate_drive, nondegenerate_drive
from .errors import ConfigError
from .units import UnitContext

POLYNOMIAL_REFERENCE: dict[int, PolynomialBlock] = {
    4: PolynomialBlock(1.4661, 0.6879, (0.7307, 0.1397)),
    6: PolynomialBlock(1.5444, 0.8642, (1.1221, 1.2617, 0.9072, 0.2224)),
    8: PolynomialBlock(
        1.6969, 0.9797, (0.5634, -0.04299, -0.02057, -0.1392, -0.04461, 0.01779)
    ),
    10: PolynomialBlock(
        1.6889,
        1.0151,
        (0.6215, 0.02882, 0.3609, -0.2192, -0.00068101, 0.0003138, 0.0003870, 0.003761),
    ),
}

#: Quoted (A_sat, PAE) per polynomial order.  Orders 4 and 8 reproduce under
#: the +-1 dB saturation definition used here; the order-6 A_sat matches a
#: +-0.5 dB band instead, and the order-10 row does not yield a 20 dB
#: amplifier at all (its small-signal gain is ~9 dB).
POLYNOMIAL_REFERENCE_TARGETS: dict[int, tuple[float, float]] = {
    4: (0.0783, 0.480),
    6: (0.0845, 0.633),
    8: (0.0894, 0.626),
    10: (0.0895, 0.627),
}


@dataclass(frozen=True)
class CircuitDesign:
    """A circuit amplifier with its drive operating point."""

    label: str
    f_pump_hz: float
    pump_dbm: float
    delta: float  # pump phase relative to the signal (degenerate only)
    signal_pump_ratio: Fraction  # Fraction(1, 2) marks degenerate operation
    chain: RfSquidChain | None = None
    element: ExtendedRfSquidElement | None = None
    n_elements: int = 10
    capacitance: float = 0.5e-12
    k_rate: float = 0.0
    # the degenerate junction-shunted design has hair-thin negative-slope dips
    # near element phase 2*pi + 0.1 (far outside the driven excursion), so its
    # element-level monotonicity check is advisory rather than blocking
    require_monotonic: bool = True

    @property
    def is_degenerate(self) -> bool:
        return self.signal_pump_ratio == Fraction(1, 2)

    def context(self) -> UnitContext:
        if self.chain is not None:
            return self.chain.context(self.f_pump_hz)
        return UnitContext(self.capacitance, 1.0 / (self.capacitance * self.k_rate), self.f_pump_hz)

    def cpr(self) -> CurrentPhaseRelation:
        if self.chain is not None:
            return rf_squid_chain_cpr(self.chain, self.f_pump_hz)
        if self.element is not None:
            return extended_rf_squid_block_cpr(
                self.element,
                self.n_elements,
                self.capacitance,
                self.k_rate,
                self.f_pump_hz,
                require_monotonic=self.require_monotonic,
            )
        raise ConfigError("design has neither a chain nor an extended element")

    def pump_amplitude(self, pump_dbm: float | None = None) -> float:
        ctx = self.context()
        return ctx.amplitude_for_dbm(self.pump_dbm if pump_dbm is None else pump_dbm, 2.0)

    def drive(self, a_signal: float = 0.0, pump_dbm: float | None = None) -> DriveSpec:
        a_p = self.pump_amplitude(pump_dbm)
        if self.is_degenerate:
            return degenerate_drive(a_signal, a_pump=a_p, delta=self.delta)
        return nondegenerate_drive(a_signal, a_p, self.signal_pump_ratio, delta=self.delta)

    def with_pump_dbm(self, pump_dbm: float) -> "CircuitDesign":
        return replace(self, pump_dbm=pump_dbm)


def _z_to_k(z_ohms: float, capacitance: float = 0.5e-12) -> float:
    return 1.0 / (capacitance * z_ohms)


RF_SQUID_DEGENERATE = CircuitDesign(
    label="rf-squid-degenerate",
    f_pump_hz=12e9,
    pump_dbm=-72.3,
    delta=0.799 * math.pi,
    signal_pump_ratio=Fraction(1, 2),
    chain=RfSquidChain(
        n=10,
        inductance=17.5e-12,
        critical_current=18.8e-6,
        phi_ext=3.09,
        capacitance=0.5e-12,
        k_rate=_z_to_k(131.0),
    ),
)

RF_SQUID_NONDEGENERATE = CircuitDesign(
    label="rf-squid-nondegenerate",
    f_pump_hz=12e9,
    pump_dbm=-72.4,
    delta=0.0,
    signal_pump_ratio=Fraction(125, 249),
    chain=RfSquidChain(
        n=10,
        inductance=18.1e-12,
        critical_current=18.1e-6,
        phi_ext=3.09,
        capacitance=0.5e-12,
        k_rate=_z_to_k(135.0),
    ),
)

EXTENDED_DEGENERATE = CircuitDesign(
    label="extended-degenerate",
    f_pump_hz=12e9,
    pump_dbm=-72.2,
    delta=0.876 * math.pi,
    signal_pump_ratio=Fraction(1, 2),
    require_monotonic=False,
    element=ExtendedRfSquidElement(
        inductance=15.3e-12,
        i_c1=21.4e-6,
        i_c2=-0.921e-6,
        shunt_inductance=399e-12,
        phi_ext=3.03,
        j_ext=4.65e-6,
    ),
    n_elements=10,
    capacitance=0.5e-12,
    k_rate=_z_to_k(127.0),
)

EXTENDED_NONDEGENERATE = CircuitDesign(
    label="extended-nondegenerate",
    f_pump_hz=12e9,
    pump_dbm=-72.1,
    delta=0.0,
    signal_pump_ratio=Fraction(125, 249),
    element=ExtendedRfSquidElement(
        inductance=15.0e-12,
        i_c1=20.3e-6,
        i_c2=-3.32e-6,
        shunt_inductance=66.5e-12,
        phi_ext=3.09,
        j_ext=0.133e-6,
    ),
    n_elements=10,
    capacitance=0.5e-12,
    k_rate=_z_to_k(124.0),
)

CIRCUIT_DESIGNS = {
    d.label: d
    for d in (
        RF_SQUID_DEGENERATE,
        RF_SQUID_NONDEGENERATE,
        EXTENDED_DEGENERATE,
        EXTENDED_NONDEGENERATE,
    )
}
