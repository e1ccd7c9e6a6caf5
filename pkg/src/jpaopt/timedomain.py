"""Direct time integration of the boundary equation of motion.

The driven boundary EOM ``phi'' + K phi' + J(phi) = 2 K phi_in'`` is
integrated from rest over a commensurate schedule; the trailing analysis
window (an exact multiple of the least common tone period) is sampled
uniformly and Fourier-analyzed to extract steady-state tone amplitudes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
from scipy.integrate import solve_ivp

from .circuits import CurrentPhaseRelation
from .drive import DriveSpec
from .errors import (
    ConfigError,
    IncommensurableError,
    RangeExceededError,
    StiffnessError,
    ToneBinError,
)

DEFAULT_MIN_PERIODS = 2000
DEFAULT_SAMPLES_PER_PERIOD = 50


def _lcm_fractions(values: list[Fraction]) -> Fraction:
    num = 1
    den = None
    for v in values:
        num = num * v.numerator // math.gcd(num, v.numerator)
        den = v.denominator if den is None else math.gcd(den, v.denominator)
    return Fraction(num, den)


@dataclass(frozen=True)
class ScheduleSpec:
    """Commensurate integration schedule.

    The total integration time is ``window_multiple * n_c * t_min`` and the
    analysis window is the trailing ``1/window_multiple`` fraction (an exact
    multiple of ``t_min``).  Intermodulation runs use ``window_multiple = 2``
    (analyze the last half); everything else uses 4 (last quarter).
    """

    t_min: float
    n_c: int
    window_multiple: int
    n_samples: int
    samples_per_signal_period: int
    min_periods: int

    @property
    def total_time(self) -> float:
        return self.window_multiple * self.n_c * self.t_min

    @property
    def window(self) -> float:
        return self.n_c * self.t_min

    @property
    def window_start(self) -> float:
        return self.total_time - self.window

    @property
    def dt(self) -> float:
        return self.window / self.n_samples

    def sample_times(self) -> np.ndarray:
        return self.window_start + self.dt * np.arange(self.n_samples)

    def bin_index(self, omega: float) -> int:
        """Exact DFT bin of ``omega``; raises if off-bin."""
        x = omega * self.window / (2.0 * math.pi)
        j = round(x)
        if abs(x - j) > 1e-6 or j < 0:
            raise ToneBinError(
                f"frequency {omega:.9g} is not a DFT bin of the analysis window "
                f"(bin spacing {2.0 * math.pi / self.window:.3e})"
            )
        if j > self.n_samples // 2:
            raise ToneBinError(f"frequency {omega:.9g} is above the sampling Nyquist limit")
        return int(j)


def make_schedule(
    drive: DriveSpec,
    min_periods: int = DEFAULT_MIN_PERIODS,
    samples_per_signal_period: int = DEFAULT_SAMPLES_PER_PERIOD,
    ip3_mode: bool = False,
) -> ScheduleSpec:
    """Build the commensurate schedule for a drive.

    ``t_min`` is the least common period of all tones; the repetition count
    is the smallest making the total time at least ``min_periods`` periods of
    every tone.
    """
    tones = drive.all_tones()
    if not tones:
        raise ConfigError("drive has no tones")
    try:
        periods = [Fraction(1, 1) / tone.ratio for tone in tones]
    except ZeroDivisionError as exc:  # pragma: no cover - ratios validated positive
        raise IncommensurableError("tone frequency ratios must be positive") from exc
    t_min_frac = _lcm_fractions(periods)
    base_period = 2.0 * math.pi / drive.base_omega
    t_min = float(t_min_frac) * base_period

    window_multiple = 2 if ip3_mode else 4
    max_period_frac = max(periods)
    # total = window_multiple * n_c * t_min >= min_periods * max_period
    ratio = Fraction(min_periods) * max_period_frac / (window_multiple * t_min_frac)
    n_c = max(1, math.ceil(ratio))

    signal_period = base_period / float(drive.signal.ratio)
    window = n_c * float(t_min_frac) * base_period
    n_samples = max(8, round(window / (signal_period / samples_per_signal_period)))
    return ScheduleSpec(
        t_min=t_min,
        n_c=n_c,
        window_multiple=window_multiple,
        n_samples=n_samples,
        samples_per_signal_period=samples_per_signal_period,
        min_periods=min_periods,
    )


@dataclass
class SteadyStateSolution:
    """Sampled steady-state trajectory over the analysis window."""

    times: np.ndarray
    phi: np.ndarray
    schedule: ScheduleSpec
    drive: DriveSpec
    diagnostics: dict = field(default_factory=dict)

    @cached_property
    def _spectrum(self) -> np.ndarray:
        return np.fft.rfft(self.phi)

    @property
    def bin_omegas(self) -> np.ndarray:
        return 2.0 * math.pi * np.arange(len(self._spectrum)) / self.schedule.window

    def amplitude_at(self, omega: float) -> complex:
        """Complex amplitude of phi at an exact bin.

        Convention: ``A sin(w t + ph)`` maps to ``-i A exp(i ph)``; the DC
        bin returns the mean.  Phases are referenced to absolute time so they
        are comparable with the drive tone phases.
        """
        j = self.schedule.bin_index(omega)
        coeff = self._spectrum[j] / self.schedule.n_samples
        if j == 0:
            return complex(coeff)
        # rfft phases are relative to the window start
        coeff *= np.exp(-1j * omega * self.schedule.window_start)
        return 2.0 * coeff

    def outgoing_amplitude(self, omega: float) -> complex:
        """Amplitude of the outgoing wave phi - phi_in at an exact bin."""
        out = self.amplitude_at(omega)
        if omega > 0.0:
            out -= self.drive.tone_bin_amplitude(omega)
        return out

    def all_amplitudes(self) -> np.ndarray:
        """One-sided amplitude spectrum with the sine-amplitude convention."""
        n = self.schedule.n_samples
        amps = self._spectrum / n
        amps = amps * np.exp(-1j * self.bin_omegas * self.schedule.window_start)
        amps[1:] *= 2.0
        return amps

    def parseval_residual(self) -> float:
        """Relative mismatch between time-domain and summed bin power."""
        mean_sq = float(np.mean(self.phi**2))
        amps = self._spectrum / self.schedule.n_samples
        power = float(np.abs(amps[0]) ** 2 + 2.0 * np.sum(np.abs(amps[1:]) ** 2))
        n = self.schedule.n_samples
        if n % 2 == 0:
            # the Nyquist bin is unpaired
            power -= float(np.abs(amps[-1]) ** 2)
        return abs(mean_sq - power) / (mean_sq + 1e-300)

    def max_abs_phi(self) -> float:
        return float(np.max(np.abs(self.phi)))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("time,phi\n")
            for t, p in zip(self.times, self.phi):
                fh.write(f"{t:.11e},{p:.11e}\n")


def extract_tone(sol: SteadyStateSolution, omega: float) -> complex:
    """Outgoing-wave complex amplitude at an exact DFT bin."""
    return sol.outgoing_amplitude(omega)


def integrate_eom(
    cpr: CurrentPhaseRelation,
    k_rate: float,
    drive: DriveSpec,
    schedule: ScheduleSpec,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    method: str = "DOP853",
) -> SteadyStateSolution:
    """Integrate the boundary EOM from rest and sample the analysis window.

    Raises
    ------
    RangeExceededError
        If the phase leaves a tabulated CPR's range.
    StiffnessError
        If the integrator's step size underflows.
    """
    jf = cpr.j_scalar
    din = drive.dphi_in_scalar()
    two_k = 2.0 * k_rate

    def rhs(t, y):
        return (y[1], two_k * din(t) - k_rate * y[1] - jf(y[0]))

    events = None
    if cpr.tabulated:
        lo, hi = cpr.check_range

        def leave_range(t, y):
            return (y[0] - lo) * (hi - y[0])

        leave_range.terminal = True
        leave_range.direction = -1
        events = [leave_range]

    t_eval = schedule.sample_times()
    sol = solve_ivp(
        rhs,
        (0.0, schedule.total_time),
        (0.0, 0.0),
        method=method,
        rtol=rtol,
        atol=atol,
        t_eval=t_eval,
        events=events,
    )
    if sol.status == 1:
        raise RangeExceededError(
            f"phase left the tabulated CPR range at t = {sol.t_events[0][0]:.4g}; "
            "enlarge the tabulation range"
        )
    if sol.status != 0:
        raise StiffnessError(f"integrator failed: {sol.message}")
    return SteadyStateSolution(
        times=sol.t,
        phi=sol.y[0],
        schedule=schedule,
        drive=drive,
        diagnostics={
            "nfev": int(sol.nfev),
            "rtol": rtol,
            "atol": atol,
            "method": method,
        },
    )


def linear_response_amplitude(omega0: float, k_rate: float, omega: float, a_in: float) -> float:
    """Analytic steady-state |phi| of the damped linear oscillator.

    Transfer from ``phi_in`` to ``phi`` is ``2 i K w / (w0^2 - w^2 + i K w)``.
    """
    h = 2j * k_rate * omega / (omega0**2 - omega**2 + 1j * k_rate * omega)
    return abs(h) * a_in
