"""Incoming-wave composition: signal, pump and two-tone drives.

Tone frequencies are stored as exact rationals (multiples of a common base
angular frequency) so commensurate scheduling and DFT bin placement are
decidable.  The incoming wave is ``phi_in(t) = sum_j A_j sin(w_j t + ph_j)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import ConfigError, IncommensurableError
from .units import OMEGA_PUMP_NORM, PUMP_AMPLITUDE_NORM


def as_ratio(value) -> Fraction:
    """Coerce to an exact Fraction; floats are rejected unless integral."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if value.is_integer():
            return Fraction(int(value))
        raise IncommensurableError(
            f"frequency ratio {value!r} is not an exact rational; "
            "pass a fractions.Fraction (e.g. Fraction(125, 249))"
        )
    raise ConfigError(f"cannot interpret {value!r} as a frequency ratio")


@dataclass(frozen=True)
class Tone:
    """One sinusoidal component of the incoming wave."""

    amplitude: float
    ratio: Fraction  # angular frequency as a multiple of the base frequency
    phase: float = 0.0
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "ratio", as_ratio(self.ratio))
        if self.ratio <= 0:
            raise ConfigError("tone frequencies must be positive")

    def omega(self, base: float = 1.0) -> float:
        return float(self.ratio) * base


@dataclass(frozen=True)
class DriveSpec:
    """Composition of the incoming wave.

    ``signal`` is the tone whose gain is measured; ``pump`` supplies the
    parametric drive (may be None for probe-only runs); ``extra`` holds any
    additional signal tones (two-tone intermodulation drives).
    """

    signal: Tone
    pump: Tone | None = None
    extra: tuple[Tone, ...] = ()
    base_omega: float = 1.0

    def all_tones(self) -> tuple[Tone, ...]:
        tones = [self.signal]
        if self.pump is not None:
            tones.append(self.pump)
        tones.extend(self.extra)
        return tuple(tones)

    @property
    def omega_signal(self) -> float:
        return self.signal.omega(self.base_omega)

    @property
    def omega_pump(self) -> float:
        if self.pump is None:
            raise ConfigError("drive has no pump tone")
        return self.pump.omega(self.base_omega)

    @property
    def omega_idler(self) -> float:
        """Idler frequency w_p - w_s."""
        return self.omega_pump - self.omega_signal

    @property
    def delta_omega(self) -> float:
        """Signal-idler half-splitting (w_s - w_i)/2; zero for degenerate drives."""
        return (self.omega_signal - self.omega_idler) / 2.0

    @property
    def is_degenerate(self) -> bool:
        return self.pump is not None and self.pump.ratio == 2 * self.signal.ratio

    def phi_in(self, t):
        """Incoming wave, vectorized over ``t``."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for tone in self.all_tones():
            out += tone.amplitude * np.sin(tone.omega(self.base_omega) * t + tone.phase)
        return out

    def dphi_in(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for tone in self.all_tones():
            w = tone.omega(self.base_omega)
            out += tone.amplitude * w * np.cos(w * t + tone.phase)
        return out

    def dphi_in_scalar(self) -> Callable[[float], float]:
        """Fast scalar d(phi_in)/dt closure for time steppers."""
        terms = [
            (tone.amplitude * tone.omega(self.base_omega), tone.omega(self.base_omega), tone.phase)
            for tone in self.all_tones()
            if tone.amplitude != 0.0
        ]
        cos = math.cos
        if not terms:
            return lambda t: 0.0
        if len(terms) == 1:
            (a, w, p), = terms
            return lambda t: a * cos(w * t + p)
        if len(terms) == 2:
            (a1, w1, p1), (a2, w2, p2) = terms
            return lambda t: a1 * cos(w1 * t + p1) + a2 * cos(w2 * t + p2)
        if len(terms) == 3:
            (a1, w1, p1), (a2, w2, p2), (a3, w3, p3) = terms
            return lambda t: (
                a1 * cos(w1 * t + p1) + a2 * cos(w2 * t + p2) + a3 * cos(w3 * t + p3)
            )
        return lambda t: sum(a * cos(w * t + p) for a, w, p in terms)

    def tone_bin_amplitude(self, omega: float, tol: float = 1e-12) -> complex:
        """Complex amplitude of phi_in at ``omega``.

        Convention: a tone ``A sin(w t + ph)`` has complex amplitude
        ``-i A exp(i ph)`` (modulus = sine amplitude, phase of a pure sine
        is -pi/2).
        """
        total = 0.0 + 0.0j
        for tone in self.all_tones():
            if abs(tone.omega(self.base_omega) - omega) <= tol * max(1.0, abs(omega)):
                total += -1j * tone.amplitude * complex(math.cos(tone.phase), math.sin(tone.phase))
        return total

    def with_signal_amplitude(self, amplitude: float) -> "DriveSpec":
        return replace(self, signal=replace(self.signal, amplitude=amplitude))

    def with_pump_scaled(self, factor: float) -> "DriveSpec":
        if self.pump is None:
            raise ConfigError("drive has no pump tone")
        return replace(self, pump=replace(self.pump, amplitude=self.pump.amplitude * factor))

    def with_two_signal_tones(self, amplitude: float) -> "DriveSpec":
        """Set equal amplitudes on the signal tone and all extra tones."""
        new_extra = tuple(replace(tn, amplitude=amplitude) for tn in self.extra)
        return replace(
            self, signal=replace(self.signal, amplitude=amplitude), extra=new_extra
        )


def degenerate_drive(
    a_signal: float,
    a_pump: float = PUMP_AMPLITUDE_NORM,
    delta: float = 1.5 * math.pi,
    base_omega: float = 1.0,
) -> DriveSpec:
    """Degenerate drive: signal at half the pump frequency.

    In normalized units the signal sits at 1 and the pump at 2; ``delta`` is
    the pump phase relative to the signal.
    """
    return DriveSpec(
        signal=Tone(a_signal, Fraction(1), 0.0, "signal"),
        pump=Tone(a_pump, Fraction(2), delta, "pump"),
        base_omega=base_omega,
    )


def nondegenerate_drive(
    a_signal: float,
    a_pump: float,
    signal_pump_ratio: Fraction = Fraction(125, 249),
    delta: float = 0.0,
    base_omega: float = 1.0,
) -> DriveSpec:
    """Nondegenerate drive: signal at ``signal_pump_ratio`` times the pump frequency."""
    ratio = as_ratio(signal_pump_ratio)
    if not 0 < ratio < 1:
        raise ConfigError("signal/pump frequency ratio must lie in (0, 1)")
    pump_ratio = Fraction(OMEGA_PUMP_NORM)
    return DriveSpec(
        signal=Tone(a_signal, pump_ratio * ratio, 0.0, "signal"),
        pump=Tone(a_pump, pump_ratio, delta, "pump"),
        base_omega=base_omega,
    )


def two_tone_drive(
    a_signal: float,
    a_pump: float,
    ratio_1: Fraction = Fraction(101, 201),
    ratio_2: Fraction = Fraction(101, 200),
    delta: float = 0.0,
    base_omega: float = 1.0,
) -> DriveSpec:
    """Two equal-amplitude signal tones plus the pump, for intermodulation runs."""
    r1, r2 = as_ratio(ratio_1), as_ratio(ratio_2)
    if r1 == r2:
        raise ConfigError("two-tone drive requires distinct signal frequencies")
    pump_ratio = Fraction(OMEGA_PUMP_NORM)
    return DriveSpec(
        signal=Tone(a_signal, pump_ratio * r1, 0.0, "signal"),
        pump=Tone(a_pump, pump_ratio, delta, "pump"),
        extra=(Tone(a_signal, pump_ratio * r2, 0.0, "signal2"),),
        base_omega=base_omega,
    )
