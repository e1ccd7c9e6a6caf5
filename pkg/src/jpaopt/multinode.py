"""Chain dynamics with intermediate nodes, stray capacitance and damping.

The lumped chain model assumes the block phase divides equally across the
repeating elements.  Adding a small stray capacitance and damping at each
intermediate node promotes the division to a dynamical degree of freedom:
for monotonic element CPRs the nodes track the equal division and the lumped
model is recovered; nonmonotonic elements admit several static divisions
(the intermediate-phase solution trifurcates) and the high-frequency node
modes get excited, so the trajectories never settle onto the lumped one.

Also hosts the manufacturing-tolerance studies: per-loop flux disorder with
pump re-tuning, and uniform inductance offsets recovered by joint pump and
frequency adjustment.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .circuits import CurrentPhaseRelation, RfSquidChain, rf_squid_chain_cpr
from .drive import DriveSpec
from .errors import ConfigError, DivergenceError, StiffnessError, UnsaturatedWarning
from .metrics import (
    SMALL_SIGNAL_FRACTION,
    GainCurve,
    GainEvaluator,
    GainPoint,
    gain_curve,
    power_added_efficiency,
)
from .timedomain import ScheduleSpec, SteadyStateSolution, make_schedule
from .units import PHI0

DEFAULT_C_STRAY_RATIO = 0.001
DEFAULT_K_STRAY_RATIO = 0.01
BLOWUP_LIMIT = 1e3


@dataclass(frozen=True)
class MultiNodeChain:
    """Loop chain with explicit intermediate nodes.

    ``phi_offsets`` holds per-loop additions to the base external flux (flux
    disorder); stray capacitance and damping at intermediate nodes default to
    ``0.001 C`` and ``0.01 K``.
    """

    base: RfSquidChain
    phi_offsets: tuple[float, ...] = ()
    c_stray_ratio: float = DEFAULT_C_STRAY_RATIO
    k_stray_ratio: float = DEFAULT_K_STRAY_RATIO

    def __post_init__(self):
        if self.phi_offsets and len(self.phi_offsets) != self.base.n:
            raise ConfigError("need one flux offset per loop")
        if self.c_stray_ratio <= 0:
            raise ConfigError("stray capacitance ratio must be positive")

    @property
    def n(self) -> int:
        return self.base.n

    def phi_ext_per_loop(self) -> np.ndarray:
        offs = np.asarray(self.phi_offsets if self.phi_offsets else np.zeros(self.n))
        return self.base.phi_ext + offs

    def element_equilibria(self) -> np.ndarray:
        """Zero-current phase drop of each loop."""
        from scipy.optimize import brentq

        r = self.base.ic_l_over_phi0
        out = np.empty(self.n)
        for i, phx in enumerate(self.phi_ext_per_loop()):
            if r < 1.0:
                out[i] = brentq(lambda u: u + r * math.sin(u + phx), -12.0, 12.0, xtol=1e-14)
            else:
                # nonmonotonic element: pick the branch continued from zero flux
                from scipy.optimize import fsolve

                out[i] = float(fsolve(lambda u: u + r * np.sin(u + phx), 0.0, xtol=1e-12)[0])
        return out


@dataclass
class MultiNodeSolution:
    """Node trajectories over the analysis window, re-centered on equilibrium."""

    times: np.ndarray
    phi: np.ndarray  # shape (n_nodes, n_samples); row 0 is the boundary node
    schedule: ScheduleSpec
    drive: DriveSpec
    phi_star: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def boundary_solution(self) -> SteadyStateSolution:
        return SteadyStateSolution(
            times=self.times,
            phi=self.phi[0],
            schedule=self.schedule,
            drive=self.drive,
            diagnostics=dict(self.diagnostics),
        )

    def node_fractions(self) -> np.ndarray:
        """Mean ratio of each node phase to the boundary phase (equal division
        gives (n+1-i)/n for node i)."""
        ref = self.phi[0]
        denom = float(np.mean(ref**2)) + 1e-300
        return np.array([float(np.mean(self.phi[i] * ref)) / denom for i in range(len(self.phi))])


def integrate_multinode(
    chain: MultiNodeChain,
    drive: DriveSpec,
    schedule: ScheduleSpec,
    f_pump_hz: float,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    method: str = "DOP853",
) -> MultiNodeSolution:
    """Integrate the full node system from its static equilibrium.

    Raises
    ------
    DivergenceError
        If any node phase leaves the equilibrium by more than 10^3.
    """
    base = chain.base
    ctx = base.context(f_pump_hz)
    ts = ctx.time_scale
    n = chain.n
    # solver-unit element current coefficients: J_i(d) = a d + b sin(d + phx_i)
    a = ts**2 / (base.inductance * base.capacitance)
    b = ts**2 * base.critical_current / (base.capacitance * PHI0)
    phx = chain.phi_ext_per_loop()
    k_norm = ctx.k_normalized
    k_stray = chain.k_stray_ratio * k_norm
    inv_cs = 1.0 / chain.c_stray_ratio
    two_k = 2.0 * k_norm
    din = drive.dphi_in_scalar()

    u_star = chain.element_equilibria()
    phi_star = np.concatenate([np.cumsum(u_star[::-1])[::-1], [0.0]])[:n]

    sin = np.sin

    def rhs(t, y):
        pos = y[:n]
        vel = y[n:]
        drops = np.empty(n)
        drops[:-1] = pos[:-1] - pos[1:]
        drops[-1] = pos[-1]
        cur = a * drops + b * sin(drops + phx)
        acc = np.empty(n)
        acc[0] = two_k * din(t) - k_norm * vel[0] - cur[0]
        # K_s is the damping rate of the stray node itself (1/(R_s C_s)), so
        # its node-equation term carries the same C_s/C weight as the inertia;
        # the internal plasma modes stay underdamped at the defaults.
        acc[1:] = inv_cs * (cur[:-1] - cur[1:]) - k_stray * vel[1:]
        return np.concatenate([vel, acc])

    cos = np.cos

    def jac(t, y):
        # analytic Jacobian keeps the implicit methods from spending their
        # time on finite-difference probes
        pos = y[:n]
        drops = np.empty(n)
        drops[:-1] = pos[:-1] - pos[1:]
        drops[-1] = pos[-1]
        g = a + b * cos(drops + phx)
        m = np.zeros((2 * n, 2 * n))
        m[:n, n:] = np.eye(n)
        m[n, 0] = -g[0]
        if n > 1:
            m[n, 1] = g[0]
        m[n, n] = -k_norm
        for i in range(1, n):
            m[n + i, i - 1] = inv_cs * g[i - 1]
            m[n + i, i] = -inv_cs * (g[i - 1] + g[i])
            if i + 1 < n:
                m[n + i, i + 1] = inv_cs * g[i]
            m[n + i, n + i] = -k_stray
        return m

    y0 = np.concatenate([phi_star, np.zeros(n)])

    def blow_up(t, y):
        return BLOWUP_LIMIT - np.max(np.abs(y[:n] - phi_star))

    blow_up.terminal = True
    blow_up.direction = -1

    t_eval = schedule.sample_times()
    kwargs = {}
    if method in ("LSODA", "BDF", "Radau"):
        kwargs["jac"] = jac
    sol = solve_ivp(
        rhs,
        (0.0, schedule.total_time),
        y0,
        method=method,
        rtol=rtol,
        atol=atol,
        t_eval=t_eval,
        events=[blow_up],
        **kwargs,
    )
    if sol.status == 1:
        raise DivergenceError(
            f"node phase exceeded {BLOWUP_LIMIT:g} at t = {sol.t_events[0][0]:.4g}"
        )
    if sol.status != 0:
        raise StiffnessError(f"multinode integrator failed: {sol.message}")
    phi = sol.y[:n] - phi_star[:, None]
    return MultiNodeSolution(
        times=sol.t,
        phi=phi,
        schedule=schedule,
        drive=drive,
        phi_star=phi_star,
        diagnostics={"nfev": int(sol.nfev), "rtol": rtol, "method": method},
    )


# ---------------------------------------------------------------------------
# Lumped-versus-multinode diagnostics
# ---------------------------------------------------------------------------


@dataclass
class InstabilityReport:
    deviation: float  # relative L2 difference of the boundary traces
    hf_energy_fraction: float
    monotonic_element: bool
    trifurcation_intervals: list[tuple[float, float]] = field(default_factory=list)


def high_frequency_fraction(sol: MultiNodeSolution, cutoff_omega: float = 10.0) -> float:
    """Spectral power of the intermediate nodes above ``cutoff_omega``,
    relative to the boundary-node power."""
    if len(sol.phi) < 2:
        return 0.0
    n_samp = sol.schedule.n_samples
    omegas = 2.0 * math.pi * np.arange(n_samp // 2 + 1) / sol.schedule.window
    hi = omegas > cutoff_omega
    total_ref = float(np.mean(sol.phi[0] ** 2)) + 1e-300
    hf_power = 0.0
    for i in range(1, len(sol.phi)):
        spec = np.abs(np.fft.rfft(sol.phi[i]) / n_samp) ** 2
        spec[1:] *= 2.0
        hf_power += float(np.sum(spec[hi]))
    return hf_power / total_ref


def lumped_multinode_deviation(
    chain: MultiNodeChain,
    drive: DriveSpec,
    f_pump_hz: float,
    min_periods: int = 2000,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    lumped_cpr: CurrentPhaseRelation | None = None,
    method: str = "DOP853",
) -> tuple[InstabilityReport, MultiNodeSolution]:
    """Compare the boundary trace of the full node system with the lumped model.

    ``method`` selects the multinode integrator.  Monotonic chains leave the
    fast internal modes unexcited, so a stiff-capable method (LSODA, Radau)
    can step over them; resolving excited modes in the nonmonotonic regime
    needs an explicit method.
    """
    base = chain.base
    ctx = base.context(f_pump_hz)
    schedule = make_schedule(drive, min_periods=min_periods)
    monotonic = base.ic_l_over_phi0 < 1.0

    mn = integrate_multinode(
        chain, drive, schedule, f_pump_hz, rtol=rtol, atol=atol, method=method
    )

    if lumped_cpr is None:
        if monotonic:
            lumped_cpr = rf_squid_chain_cpr(base, f_pump_hz)
        else:
            lumped_cpr = _lumped_cpr_unchecked(base, f_pump_hz)
    from .timedomain import integrate_eom

    lump = integrate_eom(lumped_cpr, ctx.k_normalized, drive, schedule, rtol=rtol, atol=atol)

    diff = mn.phi[0] - lump.phi
    denom = math.sqrt(float(np.mean(lump.phi**2))) + 1e-300
    deviation = math.sqrt(float(np.mean(diff**2))) / denom
    report = InstabilityReport(
        deviation=deviation,
        hf_energy_fraction=high_frequency_fraction(mn),
        monotonic_element=monotonic,
    )
    return report, mn


def _lumped_cpr_unchecked(base: RfSquidChain, f_pump_hz: float) -> CurrentPhaseRelation:
    """Equal-division lumped CPR without the monotonicity gate (diagnostics)."""
    ctx = base.context(f_pump_hz)
    scale = ctx.time_scale**2 / (base.capacitance * PHI0)
    n = base.n
    a = scale * PHI0 / (n * base.inductance)
    b = scale * base.critical_current
    phx = base.phi_ext
    from scipy.optimize import fsolve

    u_star = float(fsolve(lambda u: u + base.ic_l_over_phi0 * np.sin(u + phx), 0.0, xtol=1e-12)[0])
    p_star = n * u_star

    def j(phi):
        u = (np.asarray(phi, dtype=float) + p_star) / n
        return a * n * u + b * np.sin(u + phx)

    def dj(phi):
        u = (np.asarray(phi, dtype=float) + p_star) / n
        return a + (b / n) * np.cos(u + phx)

    def energy(phi):
        p = np.asarray(phi, dtype=float) + p_star
        u = p / n
        return a * (p**2 - p_star**2) / 2.0 - b * n * (np.cos(u + phx) - math.cos(u_star + phx))

    msin = math.sin

    def j_scalar(x):
        u = (x + p_star) / n
        return a * n * u + b * msin(u + phx)

    return CurrentPhaseRelation(
        j,
        energy,
        dj,
        j_scalar=j_scalar,
        check_range=(-6 * math.pi * n, 6 * math.pi * n),
        source=f"rf_squid_chain(n={n}, unchecked)",
        context=ctx,
        meta={
            "chain": base,
            "ic_l_over_phi0": base.ic_l_over_phi0,
            "element_current_amps": base.element_current,
            "element_equilibrium": u_star,
            "n_elements": n,
        },
    )


def static_trifurcation_scan(
    element_current: Callable[[np.ndarray], np.ndarray],
    total_phase_grid: Sequence[float],
    scan_points: int = 2001,
    span: float = 6.0 * math.pi,
) -> tuple[np.ndarray, list[tuple[float, float]]]:
    """Count static divisions of a two-element reduction.

    For each total phase ``T`` the static balance ``J(theta) = J(T - theta)``
    is root-counted on a dense grid.  Returns the per-grid-point solution
    counts and the contiguous intervals with more than one solution.
    """
    grid = np.asarray(list(total_phase_grid), dtype=float)
    counts = np.empty(len(grid), dtype=int)
    for idx, total in enumerate(grid):
        mid = total / 2.0
        theta = np.linspace(mid - span / 2.0, mid + span / 2.0, scan_points)
        h = np.asarray(element_current(theta)) - np.asarray(element_current(total - theta))
        signs = np.sign(h)
        nz = signs != 0
        crossings = int(np.sum(np.abs(np.diff(signs[nz])) > 1))
        counts[idx] = max(crossings, 1)
    intervals: list[tuple[float, float]] = []
    start = None
    for idx, c in enumerate(counts):
        if c > 1 and start is None:
            start = grid[idx]
        if c <= 1 and start is not None:
            intervals.append((start, grid[idx - 1]))
            start = None
    if start is not None:
        intervals.append((start, grid[-1]))
    return counts, intervals


# ---------------------------------------------------------------------------
# Gain evaluation through the multinode model
# ---------------------------------------------------------------------------


class MultinodeGainEvaluator:
    """Gain G(A_s) sampled by full multinode integration (drop-in for
    :class:`jpaopt.metrics.GainEvaluator` in :func:`gain_curve`)."""

    method = "multinode"

    def __init__(
        self,
        chain: MultiNodeChain,
        drive_template: DriveSpec,
        f_pump_hz: float,
        min_periods: int = 2000,
        rtol: float = 1e-10,
        atol: float = 1e-12,
    ):
        self.chain = chain
        self.drive = drive_template
        self.f_pump_hz = f_pump_hz
        self.min_periods = min_periods
        self.rtol = rtol
        self.atol = atol
        self._cache: dict[float, GainPoint] = {}
        self.max_abs_phi = 0.0
        self._schedule: ScheduleSpec | None = None

    def small_signal_amplitude(self) -> float:
        if self.drive.pump is None:
            raise ConfigError("small-signal limit needs a pump tone")
        return SMALL_SIGNAL_FRACTION * abs(self.drive.pump.amplitude)

    def point(self, a_s: float) -> GainPoint:
        if a_s <= 0.0:
            a_s = self.small_signal_amplitude()
        if a_s in self._cache:
            return self._cache[a_s]
        drive = self.drive.with_signal_amplitude(a_s)
        if self._schedule is None:
            self._schedule = make_schedule(drive, min_periods=self.min_periods)
        sol = integrate_multinode(
            self.chain, drive, self._schedule, self.f_pump_hz, rtol=self.rtol, atol=self.atol
        )
        boundary = sol.boundary_solution()
        out = boundary.outgoing_amplitude(drive.omega_signal)
        gain = abs(out) ** 2 / a_s**2
        eta = power_added_efficiency(
            gain, a_s, drive.omega_signal, drive.pump.amplitude, drive.omega_pump
        )
        self.max_abs_phi = max(self.max_abs_phi, boundary.max_abs_phi())
        pt = GainPoint(a_s=a_s, gain=gain, eta=eta)
        self._cache[a_s] = pt
        return pt

    def gain_db(self, a_s: float) -> float:
        return self.point(a_s).gain_db


# ---------------------------------------------------------------------------
# Tolerance studies
# ---------------------------------------------------------------------------


@dataclass
class FluxVariationResult:
    sigma: float
    seed: int
    offsets: tuple[float, ...]
    pump_start_dbm: float
    pump_final_dbm: float
    retune_steps: int
    small_signal_gain_db: float
    curve: GainCurve | None
    eta_pae: float
    irrecoverable: bool

    def as_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "seed": self.seed,
            "offsets": list(self.offsets),
            "pump_start_dbm": self.pump_start_dbm,
            "pump_final_dbm": self.pump_final_dbm,
            "retune_steps": self.retune_steps,
            "small_signal_gain_db": self.small_signal_gain_db,
            "a_sat": None if self.curve is None else self.curve.a_sat,
            "eta_pae": self.eta_pae,
            "irrecoverable": self.irrecoverable,
        }


def flux_variation_study(
    base: RfSquidChain,
    drive_builder: Callable[[float], DriveSpec],
    pump_start_dbm: float,
    sigma: float,
    seed: int,
    f_pump_hz: float,
    g_target_db: float = 20.0,
    band_db: float = 1.0,
    pump_step_db: float = 0.05,
    pump_floor_db: float = 3.0,
    min_periods: int = 2000,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    n_pae_points: int = 12,
) -> FluxVariationResult:
    """Per-loop flux disorder with stepwise pump reduction.

    Offsets are drawn once from a normal distribution of width ``sigma`` (in
    flux-quantum units).  If the disordered small-signal gain is out of band,
    the pump is reduced in ``pump_step_db`` decrements until the gain
    re-enters the target band (or the floor is hit); the resulting gain curve
    and PAE are computed through the multinode model.

    ``drive_builder`` maps a pump power in dBm to the operating drive.
    """
    rng = np.random.default_rng(seed)
    offsets = tuple(float(x) for x in rng.normal(0.0, sigma, base.n)) if sigma > 0 else tuple([0.0] * base.n)
    chain = MultiNodeChain(base, offsets)

    def small_signal_gain(p_dbm: float) -> float:
        ev = MultinodeGainEvaluator(
            chain, drive_builder(p_dbm), f_pump_hz, min_periods=min_periods, rtol=rtol, atol=atol
        )
        return ev.gain_db(0.0)

    pump = pump_start_dbm
    steps = 0
    g0 = small_signal_gain(pump)
    while abs(g0 - g_target_db) > band_db and (pump_start_dbm - pump) < pump_floor_db:
        pump -= pump_step_db
        steps += 1
        g0 = small_signal_gain(pump)
    irrecoverable = abs(g0 - g_target_db) > band_db
    curve = None
    eta = 0.0
    if not irrecoverable:
        ev = MultinodeGainEvaluator(
            chain, drive_builder(pump), f_pump_hz, min_periods=min_periods, rtol=rtol, atol=atol
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UnsaturatedWarning)
            curve = gain_curve(
                None,
                0.0,
                drive_builder(pump),
                g_target_db=g_target_db,
                band_db=band_db,
                evaluator=ev,
                n_pae_points=n_pae_points,
            )
        eta = curve.eta_pae
    return FluxVariationResult(
        sigma=sigma,
        seed=seed,
        offsets=offsets,
        pump_start_dbm=pump_start_dbm,
        pump_final_dbm=pump,
        retune_steps=steps,
        small_signal_gain_db=g0,
        curve=curve,
        eta_pae=eta,
        irrecoverable=irrecoverable,
    )


@dataclass
class OffsetRecoveryResult:
    l_scale: float
    freq_scale: float
    pump_dbm: float
    eta_pae: float
    a_sat: float | None
    small_signal_gain_db: float | None

    def as_dict(self) -> dict:
        return {
            "l_scale": self.l_scale,
            "freq_scale": self.freq_scale,
            "pump_dbm": self.pump_dbm,
            "eta_pae": self.eta_pae,
            "a_sat": self.a_sat,
            "small_signal_gain_db": self.small_signal_gain_db,
        }


def uniform_offset_recovery(
    base: RfSquidChain,
    drive_builder: Callable[[RfSquidChain, float, float], tuple[CurrentPhaseRelation, float, DriveSpec]],
    l_scale: float,
    pump_center_dbm: float,
    f_pump_hz: float,
    freq_scales: Sequence[float] | None = None,
    pump_span_db: float = 0.6,
    g_target_db: float = 20.0,
    band_db: float = 1.0,
    refine: bool = True,
) -> OffsetRecoveryResult:
    """Recover a uniformly offset design by joint pump and frequency tuning.

    All elements stay identical under a uniform inductance offset, so the
    equal-division lumped model applies exactly and the gain curves run
    through the fast frequency-domain path.  A coarse grid over frequency
    scale and pump power is followed by a local refinement.

    ``drive_builder(chain, freq_scale, pump_dbm)`` returns the re-scaled
    ``(cpr, k_normalized, drive)`` triple.
    """
    scaled = replace(base, inductance=base.inductance * l_scale)
    if freq_scales is None:
        freq_scales = np.arange(0.99, 1.065, 0.005)

    def pae_at(freq_scale: float, pump_dbm: float) -> tuple[float, GainCurve | None]:
        try:
            cpr, k_norm, drive = drive_builder(scaled, freq_scale, pump_dbm)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UnsaturatedWarning)
                curve = gain_curve(
                    cpr, k_norm, drive, g_target_db=g_target_db, band_db=band_db, method="hb"
                )
        except Exception:
            return 0.0, None
        return curve.eta_pae, curve

    def grid_search(f_grid, p_grid):
        best = (0.0, None, 1.0, pump_center_dbm)
        for fs in f_grid:
            for pd in p_grid:
                eta, curve = pae_at(fs, pd)
                if eta > best[0]:
                    best = (eta, curve, fs, pd)
        return best

    p_grid = np.arange(pump_center_dbm - pump_span_db, pump_center_dbm + pump_span_db + 1e-9, 0.1)
    eta, curve, fs, pd = grid_search(freq_scales, p_grid)
    if refine and curve is not None:
        f_step = (freq_scales[1] - freq_scales[0]) if len(freq_scales) > 1 else 0.005
        f_fine = np.arange(fs - f_step, fs + f_step + 1e-12, f_step / 4.0)
        p_fine = np.arange(pd - 0.1, pd + 0.1 + 1e-9, 0.025)
        eta2, curve2, fs2, pd2 = grid_search(f_fine, p_fine)
        if eta2 > eta:
            eta, curve, fs, pd = eta2, curve2, fs2, pd2
    return OffsetRecoveryResult(
        l_scale=l_scale,
        freq_scale=float(fs),
        pump_dbm=float(pd),
        eta_pae=float(eta),
        a_sat=None if curve is None else curve.a_sat,
        small_signal_gain_db=None if curve is None else curve.meta.get("small_signal_gain_db"),
    )
