"""Amplifier figures of merit: gain, PAE, saturation, bandwidth, IP3, spectra.

Power added efficiency counts only the signal-frequency output:
``eta = (G - 1) w_s^2 A_s^2 / (w_p^2 A_p^2)``.  The saturation amplitude is
the smallest signal amplitude at which the gain leaves the target band
(default +-1 dB around the target), located by a geometric bracket and
bisection; the amplifier PAE is the maximum of ``eta`` below saturation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .circuits import CurrentPhaseRelation
from .drive import DriveSpec, Tone, nondegenerate_drive, two_tone_drive
from .errors import (
    ConfigError,
    InsufficientPowerError,
    MultiLobeWarning,
    UnsaturatedWarning,
)
from .harmonic_balance import HarmonicLadder, HarmonicState, hb_solve, ladder_for_drive
from .timedomain import integrate_eom, make_schedule
from .units import UnitContext

SMALL_SIGNAL_FRACTION = 1e-4  # of the pump amplitude
DEFAULT_BAND_DB = 1.0


def power_added_efficiency(
    gain_linear: float, a_s: float, omega_s: float, a_p: float, omega_p: float
) -> float:
    """PAE of one operating point (signal-frequency output only)."""
    return (gain_linear - 1.0) * (omega_s * a_s) ** 2 / ((omega_p * a_p) ** 2)


@dataclass(frozen=True)
class GainPoint:
    a_s: float
    gain: float  # linear power gain
    eta: float

    @property
    def gain_db(self) -> float:
        return 10.0 * math.log10(self.gain)


@dataclass
class GainCurve:
    """Gain and PAE versus signal amplitude with the saturation point."""

    points: list[GainPoint]
    g_target_db: float
    band_db: float
    a_sat: float | None
    eta_pae: float
    saturated: bool
    never_in_band: bool = False
    meta: dict = field(default_factory=dict)

    def amplitudes(self) -> np.ndarray:
        return np.array([p.a_s for p in self.points])

    def gains_db(self) -> np.ndarray:
        return np.array([p.gain_db for p in self.points])

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("a_s,gain_db,eta\n")
            for p in self.points:
                fh.write(f"{p.a_s:.11e},{p.gain_db:.11e},{p.eta:.11e}\n")


class GainEvaluator:
    """Gain G(A_s) on demand, via harmonic balance or direct integration.

    The harmonic-balance path keeps a warm-start cache so repeated and nearby
    amplitudes are cheap; the time-domain path runs full schedules.
    """

    def __init__(
        self,
        cpr: CurrentPhaseRelation,
        k_rate: float,
        drive_template: DriveSpec,
        method: str = "hb",
        ladder: HarmonicLadder | None = None,
        min_periods: int = 2000,
        rtol: float = 1e-10,
        atol: float = 1e-12,
        hb_tol: float = 1e-9,
    ):
        if method not in ("hb", "dti"):
            raise ConfigError(f"unknown gain method {method!r}")
        self.cpr = cpr
        self.k_rate = k_rate
        self.drive = drive_template
        self.method = method
        self.min_periods = min_periods
        self.rtol = rtol
        self.atol = atol
        self.hb_tol = hb_tol
        self.ladder = ladder if ladder is not None else (
            ladder_for_drive(drive_template) if method == "hb" else None
        )
        self._hb_cache: dict[float, HarmonicState] = {}
        self._gain_cache: dict[float, GainPoint] = {}
        self.max_abs_phi = 0.0

    @property
    def omega_s(self) -> float:
        return self.drive.omega_signal

    def small_signal_amplitude(self) -> float:
        if self.drive.pump is None or self.drive.pump.amplitude == 0.0:
            raise ConfigError("small-signal limit needs a pump tone")
        return SMALL_SIGNAL_FRACTION * abs(self.drive.pump.amplitude)

    def _eta(self, gain: float, a_s: float) -> float:
        if self.drive.pump is None or self.drive.pump.amplitude == 0.0:
            return 0.0
        return power_added_efficiency(
            gain, a_s, self.omega_s, self.drive.pump.amplitude, self.drive.omega_pump
        )

    def point(self, a_s: float) -> GainPoint:
        if a_s <= 0.0:
            a_s = self.small_signal_amplitude()
        cached = self._gain_cache.get(a_s)
        if cached is not None:
            return cached
        drive = self.drive.with_signal_amplitude(a_s)
        if self.method == "hb":
            warm = None
            if self._hb_cache:
                nearest = min(self._hb_cache, key=lambda a: abs(a - a_s))
                warm = self._hb_cache[nearest]
            state = hb_solve(
                self.cpr, self.k_rate, drive, ladder=self.ladder, warm_start=warm, tol=self.hb_tol
            )
            self._hb_cache[a_s] = state
            out = state.outgoing_amplitude(self.omega_s, drive)
            self.max_abs_phi = max(self.max_abs_phi, state.max_abs_phi())
        else:
            schedule = make_schedule(drive, min_periods=self.min_periods)
            sol = integrate_eom(
                self.cpr, self.k_rate, drive, schedule, rtol=self.rtol, atol=self.atol
            )
            out = sol.outgoing_amplitude(self.omega_s)
            self.max_abs_phi = max(self.max_abs_phi, sol.max_abs_phi())
        gain = abs(out) ** 2 / a_s**2
        point = GainPoint(a_s=a_s, gain=gain, eta=self._eta(gain, a_s))
        self._gain_cache[a_s] = point
        return point

    def gain_db(self, a_s: float) -> float:
        return self.point(a_s).gain_db


def gain_at(
    cpr: CurrentPhaseRelation,
    k_rate: float,
    drive: DriveSpec,
    a_s: float,
    method: str = "hb",
    **kwargs,
) -> GainPoint:
    """One gain/PAE point; ``a_s = 0`` evaluates the small-signal limit."""
    return GainEvaluator(cpr, k_rate, drive, method=method, **kwargs).point(a_s)


def find_saturation(
    sampler: Callable[[float], float],
    g_target_db: float,
    band_db: float = DEFAULT_BAND_DB,
    a_start: float = 1e-3,
    ceiling: float = 1.0,
    growth: float = 1.3,
    rel_tol: float = 1e-4,
) -> float | None:
    """Smallest amplitude where ``|sampler(a) - g_target_db| > band_db``.

    ``sampler`` returns gain in dB.  A geometric sweep brackets the first
    band exit, then bisection refines it to ``rel_tol`` relative.  Returns
    None (with :class:`UnsaturatedWarning`) if the gain stays in band up to
    ``ceiling``; returns 0.0 if the gain is already out of band in the
    small-amplitude limit.
    """

    def out_of_band(a: float) -> bool:
        return abs(sampler(a) - g_target_db) > band_db

    if out_of_band(a_start):
        # walk down; the curve may re-enter the band at small amplitude
        a = a_start
        while a > a_start * 1e-6:
            a /= 4.0
            if not out_of_band(a):
                lo, hi = a, a * 4.0
                break
        else:
            return 0.0
    else:
        a = a_start
        lo = a_start
        hi = None
        while a < ceiling:
            a = min(a * growth, ceiling)
            if out_of_band(a):
                hi = a
                break
            lo = a
            if a >= ceiling:
                break
        if hi is None:
            warnings.warn(
                f"gain stayed within +-{band_db} dB of {g_target_db} dB up to "
                f"amplitude {ceiling}",
                UnsaturatedWarning,
            )
            return None
    while (hi - lo) > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if out_of_band(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def gain_curve(
    cpr: CurrentPhaseRelation,
    k_rate: float,
    drive: DriveSpec,
    g_target_db: float = 20.0,
    band_db: float = DEFAULT_BAND_DB,
    method: str = "hb",
    a_start: float | None = None,
    ceiling: float | None = None,
    n_pae_points: int = 30,
    evaluator: GainEvaluator | None = None,
    **kwargs,
) -> GainCurve:
    """Sweep the gain versus amplitude, locate saturation and the PAE maximum."""
    ev = evaluator or GainEvaluator(cpr, k_rate, drive, method=method, **kwargs)
    pump_amp = abs(drive.pump.amplitude) if drive.pump is not None else 1.0
    if a_start is None:
        a_start = 0.01 * pump_amp
    if ceiling is None:
        ceiling = 2.0 * pump_amp

    failures: list[float] = []

    def sampler(a: float) -> float:
        # a solver failure beyond the first valid point marks the end of
        # usable operation and counts as leaving the band
        from .errors import JpaoptError

        try:
            return ev.gain_db(a)
        except JpaoptError:
            failures.append(a)
            return g_target_db + 100.0

    a_sat = find_saturation(
        sampler, g_target_db, band_db=band_db, a_start=a_start, ceiling=ceiling
    )
    never_in_band = a_sat == 0.0
    saturated = a_sat is not None and not never_in_band

    if saturated:
        # dense tail near saturation: the PAE maximum sits at or near A_sat
        amps = np.concatenate(
            [
                [ev.small_signal_amplitude() if drive.pump is not None else a_start],
                np.linspace(0.15 * a_sat, 0.7 * a_sat, max(4, n_pae_points // 3)),
                np.linspace(0.72 * a_sat, a_sat, max(8, n_pae_points)),
            ]
        )
    elif never_in_band:
        amps = np.array([a_start])
    else:
        amps = np.geomspace(a_start, ceiling, n_pae_points)

    from .errors import JpaoptError

    points = []
    for a in np.unique(amps):
        try:
            points.append(ev.point(a))
        except JpaoptError:
            failures.append(a)
    in_range = [p for p in points if a_sat is None or p.a_s <= a_sat * (1 + 1e-12)]
    eta_pae = max((p.eta for p in in_range), default=0.0) if not never_in_band else 0.0
    return GainCurve(
        points=points,
        g_target_db=g_target_db,
        band_db=band_db,
        a_sat=a_sat,
        eta_pae=eta_pae,
        saturated=saturated,
        never_in_band=never_in_band,
        meta={
            "method": ev.method,
            "max_abs_phi": ev.max_abs_phi,
            "small_signal_gain_db": ev.point(0.0).gain_db if drive.pump is not None else None,
            "solver_failures": sorted(failures),
        },
    )


def calibrate_pump(
    curve_for_pump: Callable[[float], GainCurve],
    pump_grid_dbm: Sequence[float],
) -> tuple[float, GainCurve]:
    """Pick the pump power maximizing PAE over a dBm grid.

    The gain of a near-threshold parametric amplifier moves by decibels for
    sub-decibel pump changes, so published operating points are reproduced by
    re-tuning the pump (the design flows treat pump power as a hyperparameter).
    """
    best: tuple[float, GainCurve] | None = None
    for p_dbm in pump_grid_dbm:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UnsaturatedWarning)
            curve = curve_for_pump(p_dbm)
        if best is None or curve.eta_pae > best[1].eta_pae:
            best = (p_dbm, curve)
    if best is None:
        raise ConfigError("empty pump grid")
    return best


# ---------------------------------------------------------------------------
# Bandwidth
# ---------------------------------------------------------------------------


@dataclass
class BandwidthResult:
    omegas: np.ndarray  # normalized signal frequencies
    gains_db: np.ndarray
    peak_gain_db: float
    peak_omega: float
    criterion_db: float
    width_norm: float  # band width in normalized angular frequency
    width_hz: float | None
    multi_lobe: bool
    band: tuple[float, float]

    def to_csv(self, path, ctx: UnitContext | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("omega_norm,frequency_hz,gain_db\n")
            for w, g in zip(self.omegas, self.gains_db):
                f_hz = ctx.frequency_hz(w) if ctx is not None else float("nan")
                fh.write(f"{w:.11e},{f_hz:.11e},{g:.11e}\n")


def _band_edges(x: np.ndarray, y: np.ndarray, level: float) -> list[tuple[float, float]]:
    """Contiguous intervals where y >= level, edges linearly interpolated."""
    above = y >= level
    bands = []
    i = 0
    n = len(x)
    while i < n:
        if above[i]:
            j = i
            while j + 1 < n and above[j + 1]:
                j += 1
            lo = x[i]
            if i > 0:
                lo = x[i - 1] + (x[i] - x[i - 1]) * (level - y[i - 1]) / (y[i] - y[i - 1])
            hi = x[j]
            if j + 1 < n:
                hi = x[j] + (x[j + 1] - x[j]) * (level - y[j]) / (y[j + 1] - y[j])
            bands.append((lo, hi))
            i = j + 1
        else:
            i += 1
    return bands


def bandwidth(
    cpr: CurrentPhaseRelation,
    k_rate: float,
    drive: DriveSpec,
    criterion_db: float = 3.0,
    rel_span: float = 0.10,
    n_points: int = 81,
    n_pump: int = 6,
    ctx: UnitContext | None = None,
) -> BandwidthResult:
    """Small-signal gain versus signal frequency; width of the criterion band.

    The sweep runs the sideband-lattice harmonic balance at a fixed small
    signal amplitude, so it applies to nondegenerate operation.  The width is
    the widest contiguous band with gain within ``criterion_db`` of the peak;
    disjoint qualifying bands set the multi-lobe flag.
    """
    if drive.pump is None:
        raise ConfigError("bandwidth needs a pumped drive")
    ctx = ctx or cpr.context
    omega_p = drive.omega_pump
    omega_c = drive.omega_signal
    a_small = SMALL_SIGNAL_FRACTION * abs(drive.pump.amplitude)
    omegas = omega_c * (1.0 + np.linspace(-rel_span, rel_span, n_points))
    gains = np.empty(n_points)
    warm: HarmonicState | None = None
    for i, w in enumerate(omegas):
        ladder = HarmonicLadder.nondegenerate(omega_p, float(w), n_pump=n_pump)
        sweep_drive = DriveSpec(
            signal=Tone(a_small, Fraction(float(w)).limit_denominator(10**12), 0.0, "signal"),
            pump=drive.pump,
            base_omega=drive.base_omega,
        )
        state = hb_solve(cpr, k_rate, sweep_drive, ladder=ladder, warm_start=warm)
        warm = state
        out = state.outgoing_amplitude(float(w), sweep_drive)
        gains[i] = 20.0 * math.log10(abs(out) / a_small)

    i_peak = int(np.argmax(gains))
    level = gains[i_peak] - criterion_db
    bands = _band_edges(omegas, gains, level)
    in_peak = [b for b in bands if b[0] <= omegas[i_peak] <= b[1]]
    main = in_peak[0] if in_peak else max(bands, key=lambda b: b[1] - b[0])
    multi = len(bands) > 1
    if multi:
        warnings.warn("gain profile has multiple qualifying lobes", MultiLobeWarning)
    width_norm = main[1] - main[0]
    width_hz = None
    if ctx is not None:
        width_hz = ctx.frequency_hz(width_norm)
    return BandwidthResult(
        omegas=omegas,
        gains_db=gains,
        peak_gain_db=float(gains[i_peak]),
        peak_omega=float(omegas[i_peak]),
        criterion_db=criterion_db,
        width_norm=float(width_norm),
        width_hz=width_hz,
        multi_lobe=multi,
        band=main,
    )


# ---------------------------------------------------------------------------
# Two-tone intermodulation (IP3)
# ---------------------------------------------------------------------------


@dataclass
class Ip3Result:
    p_in_dbm: np.ndarray  # total input power of both tones
    p_out_dbm: dict  # series name -> array
    fits: dict  # series name -> (slope, intercept, residual)
    iip3_dbm: float
    oip3_dbm: float
    fit_window: tuple[int, int]
    linear_series: str
    cubic_series: str

    def to_csv(self, path) -> None:
        names = list(self.p_out_dbm)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("p_in_dbm," + ",".join(names) + "\n")
            for i, p in enumerate(self.p_in_dbm):
                row = ",".join(f"{self.p_out_dbm[k][i]:.11e}" for k in names)
                fh.write(f"{p:.11e},{row}\n")


def _fixed_slope_fit(x: np.ndarray, y: np.ndarray, slope: float) -> tuple[float, float]:
    intercept = float(np.mean(y - slope * x))
    residual = float(np.sqrt(np.mean((y - slope * x - intercept) ** 2)))
    return intercept, residual


def ip3(
    cpr: CurrentPhaseRelation,
    k_rate: float,
    pump: Tone,
    ctx: UnitContext,
    ratio_1: Fraction = Fraction(101, 201),
    ratio_2: Fraction = Fraction(101, 200),
    p_in_grid_dbm: Sequence[float] | None = None,
    fit_points: tuple[int, int] = (3, 10),
    min_periods: int = 2000,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    noise_floor_dbm: float = -200.0,
) -> Ip3Result:
    """Two-tone intermodulation intercept from time-domain runs.

    Each grid point integrates the EOM in intermodulation mode (total time
    ``2 n_c T_min``, last half analyzed) and extracts the two signal tones and
    the cubic products ``2 w_1 - w_2`` and ``2 w_2 - w_1``.  Slope-1 and
    slope-3 lines are fitted over ``fit_points`` (1-indexed, inclusive); the
    intercept uses the lower linear and the higher cubic series.
    """
    if p_in_grid_dbm is None:
        p_in_grid_dbm = np.arange(-127.0, -101.0 + 1e-9, 2.0)
    p_in = np.asarray(list(p_in_grid_dbm), dtype=float)
    lo_fit, hi_fit = fit_points
    if not (1 <= lo_fit < hi_fit <= len(p_in)):
        raise ConfigError("fit window outside the power grid")

    template = two_tone_drive(1.0, pump.amplitude, ratio_1, ratio_2, delta=pump.phase)
    w1 = template.signal.omega(template.base_omega)
    w2 = template.extra[0].omega(template.base_omega)
    targets = {
        "tone_1": w1,
        "tone_2": w2,
        "imd_2w1-w2": 2.0 * w1 - w2,
        "imd_2w2-w1": 2.0 * w2 - w1,
    }
    series = {k: np.empty(len(p_in)) for k in targets}
    schedule = None
    for i, p_tot in enumerate(p_in):
        # equal tones: each carries half the quoted input power
        a_tone = ctx.amplitude_for_dbm(p_tot - 10.0 * math.log10(2.0), w1)
        drive = template.with_two_signal_tones(a_tone)
        if schedule is None:
            schedule = make_schedule(drive, min_periods=min_periods, ip3_mode=True)
        sol = integrate_eom(cpr, k_rate, drive, schedule, rtol=rtol, atol=atol)
        for name, w in targets.items():
            amp = sol.outgoing_amplitude(w)
            series[name][i] = ctx.power_dbm(abs(amp), w)

    if max(np.max(series["imd_2w1-w2"]), np.max(series["imd_2w2-w1"])) < noise_floor_dbm:
        raise InsufficientPowerError(
            "cubic products below the numerical noise floor at all powers; "
            "raise the input power grid"
        )

    sl = slice(lo_fit - 1, hi_fit)
    fits = {}
    for name in ("tone_1", "tone_2"):
        c, r = _fixed_slope_fit(p_in[sl], series[name][sl], 1.0)
        fits[name] = (1.0, c, r)
    for name in ("imd_2w1-w2", "imd_2w2-w1"):
        c, r = _fixed_slope_fit(p_in[sl], series[name][sl], 3.0)
        fits[name] = (3.0, c, r)

    linear_name = min(("tone_1", "tone_2"), key=lambda k: fits[k][1])
    cubic_name = max(("imd_2w1-w2", "imd_2w2-w1"), key=lambda k: fits[k][1])
    c1 = fits[linear_name][1]
    c3 = fits[cubic_name][1]
    iip3 = (c1 - c3) / 2.0
    oip3 = iip3 + c1
    return Ip3Result(
        p_in_dbm=p_in,
        p_out_dbm=series,
        fits=fits,
        iip3_dbm=float(iip3),
        oip3_dbm=float(oip3),
        fit_window=fit_points,
        linear_series=linear_name,
        cubic_series=cubic_name,
    )


# ---------------------------------------------------------------------------
# Spectra
# ---------------------------------------------------------------------------


@dataclass
class SpectrumResult:
    omegas: np.ndarray
    amplitudes: np.ndarray  # outgoing complex amplitudes
    power: np.ndarray  # dBm (physical context) or normalized A^2 w^2
    unit: str
    labels: dict  # bin index -> label

    def to_csv(self, path, ctx: UnitContext | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"omega_norm,frequency_hz,real,imag,power_{self.unit}\n")
            for i, w in enumerate(self.omegas):
                f_hz = ctx.frequency_hz(w) if ctx is not None else float("nan")
                a = self.amplitudes[i]
                fh.write(
                    f"{w:.11e},{f_hz:.11e},{a.real:.11e},{a.imag:.11e},{self.power[i]:.11e}\n"
                )

    def power_at(self, omega: float, tol: float = 1e-9) -> float:
        j = int(np.argmin(np.abs(self.omegas - omega)))
        if abs(self.omegas[j] - omega) > tol * max(1.0, omega):
            raise ConfigError(f"no spectrum bin at {omega:.9g}")
        return float(self.power[j])


def power_spectrum(sol, ctx: UnitContext | None = None, max_omega: float | None = None) -> SpectrumResult:
    """Outgoing power at every DFT bin, with the notable bins labeled."""
    drive = sol.drive
    amps = sol.all_amplitudes()
    omegas = sol.bin_omegas
    for tone in drive.all_tones():
        w = tone.omega(drive.base_omega)
        j = sol.schedule.bin_index(w)
        amps[j] -= drive.tone_bin_amplitude(w)
    if max_omega is not None:
        keep = omegas <= max_omega
        omegas, amps = omegas[keep], amps[keep]
    if ctx is not None:
        power = np.array([ctx.power_dbm(abs(a), w) for a, w in zip(amps, omegas)])
        unit = "dbm"
    else:
        power = (np.abs(amps) * omegas) ** 2
        unit = "normalized"

    labels: dict[int, str] = {}

    def mark(omega: float, label: str):
        if omega <= 0 or (max_omega is not None and omega > max_omega):
            return
        j = int(np.argmin(np.abs(omegas - omega)))
        if abs(omegas[j] - omega) < 1e-6 * max(1.0, omega):
            labels.setdefault(j, label)

    w_s = drive.omega_signal
    mark(w_s, "signal")
    if drive.pump is not None:
        w_p = drive.omega_pump
        mark(w_p, "pump")
        mark(w_p - w_s, "idler")
        mark(w_p + w_s, "pump+signal")
        mark(2.0 * w_p, "pump 2nd harmonic")
    if drive.extra:
        w_2 = drive.extra[0].omega(drive.base_omega)
        mark(w_2, "signal2")
        if drive.pump is not None:
            mark(drive.omega_pump - w_2, "idler2")
        mark(2.0 * w_s - w_2, "imd 2w1-w2")
        mark(2.0 * w_2 - w_s, "imd 2w2-w1")
    mark(2.0 * w_s, "signal 2nd order")
    mark(3.0 * w_s, "signal 3rd order")
    return SpectrumResult(omegas=omegas, amplitudes=amps, power=power, unit=unit, labels=labels)


# ---------------------------------------------------------------------------
# Nondegenerate PAE relations
# ---------------------------------------------------------------------------

NONDEGENERATE_PAE_BOUND = 0.25


def nondegenerate_pae_limit(eta_degenerate: float, gain_degenerate: float) -> float:
    """Degenerate-limit PAE of the nondegenerate amplifier derived from a
    degenerate point with gain ``G`` and PAE ``eta``: ``eta (G-4)/(4G-4)``."""
    g = gain_degenerate
    return eta_degenerate * (g - 4.0) / (4.0 * g - 4.0)


def nondegenerate_pae_from_degenerate(
    eta_degenerate: float,
    gain_degenerate: float,
    omega_s: float,
    delta_omega: float,
) -> float:
    """Nondegenerate PAE at finite signal-idler splitting.

    The nondegenerate amplifier runs at signal frequency ``w_s + dw`` with a
    quarter of the degenerate power gain; its PAE follows from the same
    signal amplitude.
    """
    g = gain_degenerate
    a_s_sq = eta_degenerate / ((g - 1.0) * omega_s**2)
    return (g / 4.0 - 1.0) * (omega_s + delta_omega) ** 2 * a_s_sq
