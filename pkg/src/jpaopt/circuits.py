"""Current-phase relations for the supported inductive blocks.

Every solver consumes a :class:`CurrentPhaseRelation`: the block current
``J(phi)`` expressed in normalized solver units, i.e. the equation of motion
is ``phi'' + K phi' + J(phi) = 2 K phi_in'`` in pump-normalized time.  For
physical circuits the raw current in amperes is kept in the metadata so the
amperes-level design checks (monotonicity penalties, trifurcation scans) can
run on the element itself.

All constructors re-center the phase so that ``J(0) = 0`` at the operating
point: flux-biased elements carry current at zero phase, and the solvers
assume the rest state is an equilibrium.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import (
    BranchAmbiguityError,
    ConfigError,
    MonotonicityError,
    NonconvergenceError,
    RangeExceededError,
    StabilityError,
)
from .units import PHI0, UnitContext

DEFAULT_CHECK_RANGE = (-6.0 * math.pi, 6.0 * math.pi)


class CurrentPhaseRelation:
    """Block current and energy versus phase, in solver units.

    Parameters
    ----------
    j, energy, dj : callables
        Vectorized evaluators of the current, its integral from zero, and its
        derivative.
    check_range : (float, float)
        Phase range over which the relation is defined/validated.  Tabulated
        relations raise :class:`RangeExceededError` outside of it.
    """

    def __init__(
        self,
        j: Callable,
        energy: Callable,
        dj: Callable,
        *,
        j_scalar: Callable[[float], float] | None = None,
        check_range: tuple[float, float] = DEFAULT_CHECK_RANGE,
        tabulated: bool = False,
        source: str = "",
        context: UnitContext | None = None,
        meta: dict | None = None,
    ):
        self._j = j
        self._energy = energy
        self._dj = dj
        self.j_scalar = j_scalar if j_scalar is not None else (lambda x: float(j(x)))
        self.check_range = (float(check_range[0]), float(check_range[1]))
        self.tabulated = tabulated
        self.source = source
        self.context = context
        self.meta = dict(meta or {})

    def __call__(self, phi):
        return self.j(phi)

    def j(self, phi):
        if self.tabulated:
            self._check_bounds(phi)
        return self._j(phi)

    def energy(self, phi):
        if self.tabulated:
            self._check_bounds(phi)
        return self._energy(phi)

    def dj(self, phi):
        if self.tabulated:
            self._check_bounds(phi)
        return self._dj(phi)

    def _check_bounds(self, phi):
        lo, hi = self.check_range
        pmin = float(np.min(phi))
        pmax = float(np.max(phi))
        if pmin < lo or pmax > hi:
            raise RangeExceededError(
                f"phase {pmin:.3g}..{pmax:.3g} outside tabulated range "
                f"[{lo:.3g}, {hi:.3g}]; enlarge the check range"
            )

    def is_monotonic(self, lo: float | None = None, hi: float | None = None, points: int = 100) -> bool:
        """Strictly increasing current on a grid over ``[lo, hi]``."""
        lo = self.check_range[0] if lo is None else lo
        hi = self.check_range[1] if hi is None else hi
        grid = np.linspace(lo, hi, points)
        return bool(np.all(np.diff(self.j(grid)) > 0.0))

    def energy_matches_current(self, points: int = 201, rel_tol: float = 1e-8) -> bool:
        """Check dE/dphi == J by central differences on the check range."""
        lo, hi = self.check_range
        pad = 1e-3 * (hi - lo)
        grid = np.linspace(lo + pad, hi - pad, points)
        # small absolute step: the O(h^2) truncation must sit below rel_tol
        h = min(1e-3, (hi - lo) * 1e-5)
        de = (self.energy(grid + h) - self.energy(grid - h)) / (2.0 * h)
        jj = self.j(grid)
        scale = np.max(np.abs(jj)) + 1e-30
        return bool(np.max(np.abs(de - jj)) <= rel_tol * scale)


def _poly_eval_factory(coeffs: np.ndarray) -> Callable[[float], float]:
    # Horner on ascending coefficients, scalar-fast for the time stepper.
    rev = tuple(coeffs[::-1])

    def j_scalar(x: float) -> float:
        acc = 0.0
        for c in rev:
            acc = acc * x + c
        return acc

    return j_scalar


@dataclass(frozen=True)
class PolynomialBlock:
    """Normalized polynomial inductive block.

    ``coeffs`` holds the energy coefficients ``g_3 .. g_n`` (pump-normalized,
    1/C absorbed); the block energy is
    ``E = omega0^2 phi^2 / 2 + g_3 phi^3 + ... + g_n phi^n``.
    """

    omega0: float
    damping: float
    coeffs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(g) for g in self.coeffs))

    @property
    def order(self) -> int:
        return len(self.coeffs) + 2

    def as_dict(self) -> dict:
        return {"omega0": self.omega0, "damping": self.damping, "coeffs": list(self.coeffs)}


def polynomial_cpr(block: PolynomialBlock) -> CurrentPhaseRelation:
    """Current-phase relation of a polynomial block.

    ``J(phi) = omega0^2 phi + 3 g_3 phi^2 + ... + n g_n phi^(n-1)``.

    Raises
    ------
    StabilityError
        If the order is odd or the leading coefficient is not positive.
    """
    n = block.order
    if n < 4 or n % 2 != 0:
        raise StabilityError(f"polynomial order must be an even integer >= 4, got {n}")
    if block.coeffs[-1] <= 0.0:
        raise StabilityError(
            f"leading energy coefficient g_{n} = {block.coeffs[-1]:g} must be positive "
            "for a global energy minimum"
        )

    w2 = block.omega0**2
    powers = np.arange(3, n + 1)
    g = np.asarray(block.coeffs)
    # ascending coefficient arrays for J, E and dJ
    cj = np.zeros(n)
    cj[1] = w2
    cj[powers - 1] = powers * g
    ce = np.zeros(n + 1)
    ce[2] = w2 / 2.0
    ce[powers] = g
    cd = np.zeros(n - 1)
    cd[0] = w2
    cd[powers - 2] = powers * (powers - 1) * g

    def j(phi):
        return np.polynomial.polynomial.polyval(phi, cj)

    def energy(phi):
        return np.polynomial.polynomial.polyval(phi, ce)

    def dj(phi):
        return np.polynomial.polynomial.polyval(phi, cd)

    return CurrentPhaseRelation(
        j,
        energy,
        dj,
        j_scalar=_poly_eval_factory(cj),
        check_range=(-40.0, 40.0),
        source=f"polynomial(order={n})",
        meta={"block": block},
    )


@dataclass(frozen=True)
class RfSquidChain:
    """Chain of identical flux-biased superconducting loops.

    Each loop is a linear inductance in parallel with a Josephson junction;
    the block divides its phase equally across the ``n`` loops.  ``k_rate``
    is the boundary damping rate; the line impedance follows from it as
    ``Z = 1/(C K)``.
    """

    n: int
    inductance: float  # henries, per loop
    critical_current: float  # amperes
    phi_ext: float  # external flux per loop, units of phi0
    capacitance: float  # farads
    k_rate: float  # rad/s

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("chain needs at least one element")
        if self.inductance <= 0 or self.capacitance <= 0 or self.k_rate <= 0:
            raise ConfigError("inductance, capacitance and damping must be positive")

    @property
    def z_ohms(self) -> float:
        return 1.0 / (self.capacitance * self.k_rate)

    @property
    def ic_l_over_phi0(self) -> float:
        return self.critical_current * self.inductance / PHI0

    def context(self, f_pump_hz: float) -> UnitContext:
        return UnitContext(self.capacitance, self.z_ohms, f_pump_hz)

    def element_current(self, theta):
        """Element current in amperes versus element phase (not re-centered)."""
        return PHI0 * np.asarray(theta) / self.inductance + self.critical_current * np.sin(
            np.asarray(theta) + self.phi_ext
        )

    def element_equilibrium(self) -> float:
        """Element phase where the element current vanishes."""
        r = self.ic_l_over_phi0
        f = lambda u: u + r * math.sin(u + self.phi_ext)
        lo, hi = -4.0 * math.pi, 4.0 * math.pi
        return float(brentq(f, lo, hi, xtol=1e-14))

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "inductance": self.inductance,
            "critical_current": self.critical_current,
            "phi_ext": self.phi_ext,
            "capacitance": self.capacitance,
            "k_rate": self.k_rate,
        }


def rf_squid_chain_cpr(chain: RfSquidChain, f_pump_hz: float) -> CurrentPhaseRelation:
    """Block CPR of an equal-division loop chain, in solver units.

    The raw block current is ``J(phi) = phi0 phi / (n L) + i_c sin(phi/n +
    phi_ext)``; the returned relation is re-centered on the equilibrium
    where the total current vanishes.

    Raises
    ------
    MonotonicityError
        If ``i_c L / phi0 >= 1``: the element CPR is nonmonotonic, the phase
        division across elements is ambiguous, and internal modes would be
        excited.
    """
    ratio = chain.ic_l_over_phi0
    if ratio >= 1.0:
        raise MonotonicityError(
            f"i_c*L/phi0 = {ratio:.4f} >= 1: element current-phase relation is "
            "nonmonotonic; repeating-element blocks require monotonic elements"
        )
    ctx = chain.context(f_pump_hz)
    u_star = chain.element_equilibrium()
    scale = ctx.time_scale**2 / (chain.capacitance * PHI0)
    n = chain.n
    a = scale * PHI0 / (n * chain.inductance)
    b = scale * chain.critical_current
    phi_ext = chain.phi_ext
    phi_star = n * u_star
    e_ref = math.cos(u_star + phi_ext)

    def j(phi):
        u = (np.asarray(phi, dtype=float) + phi_star) / n
        return a * n * u + b * np.sin(u + phi_ext)

    def dj(phi):
        u = (np.asarray(phi, dtype=float) + phi_star) / n
        return a + (b / n) * np.cos(u + phi_ext)

    def energy(phi):
        p = np.asarray(phi, dtype=float) + phi_star
        u = p / n
        return (
            a * (p**2 - phi_star**2) / 2.0
            - b * n * (np.cos(u + phi_ext) - e_ref)
        )

    sin = math.sin

    def j_scalar(x: float) -> float:
        u = (x + phi_star) / n
        return a * n * u + b * sin(u + phi_ext)

    span = 6.0 * math.pi * n
    return CurrentPhaseRelation(
        j,
        energy,
        dj,
        j_scalar=j_scalar,
        check_range=(-span, span),
        source=f"rf_squid_chain(n={n})",
        context=ctx,
        meta={
            "chain": chain,
            "element_current_amps": chain.element_current,
            "ic_l_over_phi0": ratio,
            "element_equilibrium": u_star,
            "n_elements": n,
        },
    )


# ---------------------------------------------------------------------------
# Generic two-terminal netlists
# ---------------------------------------------------------------------------

GROUND = "gnd"
TERMINAL = "top"


@dataclass(frozen=True)
class Branch:
    """Two-terminal inductive branch: linear inductor or Josephson junction."""

    node_a: str
    node_b: str
    kind: str  # "inductor" | "junction"
    inductance: float = 0.0
    critical_current: float = 0.0
    phase_offset: float = 0.0

    def __post_init__(self):
        if self.kind not in ("inductor", "junction"):
            raise ConfigError(f"unknown branch kind {self.kind!r}")
        if self.kind == "inductor" and self.inductance <= 0:
            raise ConfigError("inductor branch needs a positive inductance")
        if self.kind == "junction" and self.critical_current == 0.0:
            raise ConfigError("junction branch needs a nonzero critical current")

    def current(self, drop: float) -> float:
        """Current from node_a to node_b for phase drop ``drop`` (amperes)."""
        if self.kind == "inductor":
            return PHI0 * drop / self.inductance
        return self.critical_current * math.sin(drop + self.phase_offset)

    def dcurrent(self, drop: float) -> float:
        if self.kind == "inductor":
            return PHI0 / self.inductance
        return self.critical_current * math.cos(drop + self.phase_offset)

    @property
    def current_scale(self) -> float:
        if self.kind == "inductor":
            return PHI0 / self.inductance
        return abs(self.critical_current)


@dataclass(frozen=True)
class Netlist:
    """Two-terminal element netlist with optional node current biases."""

    branches: tuple[Branch, ...]
    current_bias: dict = field(default_factory=dict)  # node -> amperes
    terminal: str = TERMINAL
    ground: str = GROUND

    def internal_nodes(self) -> list[str]:
        nodes = []
        for br in self.branches:
            for nd in (br.node_a, br.node_b):
                if nd not in (self.terminal, self.ground) and nd not in nodes:
                    nodes.append(nd)
        return nodes

    def validate(self):
        nodes = {self.terminal, self.ground, *self.internal_nodes()}
        for nd in self.current_bias:
            if nd not in nodes:
                raise ConfigError(f"current bias on unknown node {nd!r}")
        # connectivity between terminals
        adjacency = {nd: set() for nd in nodes}
        for br in self.branches:
            adjacency[br.node_a].add(br.node_b)
            adjacency[br.node_b].add(br.node_a)
        seen = {self.terminal}
        stack = [self.terminal]
        while stack:
            for nxt in adjacency[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        if self.ground not in seen:
            raise ConfigError("netlist is not connected between terminal and ground")
        if seen != nodes:
            raise ConfigError("netlist has nodes not connected to the terminals")


class _NetlistStatics:
    """Static Kirchhoff solve of internal node phases at fixed terminal phase."""

    def __init__(self, netlist: Netlist):
        netlist.validate()
        self.netlist = netlist
        self.nodes = netlist.internal_nodes()
        self.index = {nd: i for i, nd in enumerate(self.nodes)}
        self.scale = max(br.current_scale for br in netlist.branches)
        if netlist.current_bias:
            self.scale = max(self.scale, max(abs(v) for v in netlist.current_bias.values()))
        self.bias = np.array([netlist.current_bias.get(nd, 0.0) for nd in self.nodes])

    def _phase(self, node: str, theta: float, x: np.ndarray) -> float:
        if node == self.netlist.terminal:
            return theta
        if node == self.netlist.ground:
            return 0.0
        return x[self.index[node]]

    def residual(self, theta: float, x: np.ndarray) -> np.ndarray:
        """Net current out of each internal node minus its bias."""
        f = -self.bias.copy()
        for br in self.netlist.branches:
            drop = self._phase(br.node_a, theta, x) - self._phase(br.node_b, theta, x)
            cur = br.current(drop)
            if br.node_a in self.index:
                f[self.index[br.node_a]] += cur
            if br.node_b in self.index:
                f[self.index[br.node_b]] -= cur
        return f

    def jacobian(self, theta: float, x: np.ndarray) -> np.ndarray:
        m = len(self.nodes)
        jac = np.zeros((m, m))
        for br in self.netlist.branches:
            drop = self._phase(br.node_a, theta, x) - self._phase(br.node_b, theta, x)
            g = br.dcurrent(drop)
            ia = self.index.get(br.node_a)
            ib = self.index.get(br.node_b)
            if ia is not None:
                jac[ia, ia] += g
                if ib is not None:
                    jac[ia, ib] -= g
            if ib is not None:
                jac[ib, ib] += g
                if ia is not None:
                    jac[ib, ia] -= g
        return jac

    def terminal_current(self, theta: float, x: np.ndarray) -> float:
        cur = 0.0
        for br in self.netlist.branches:
            drop = self._phase(br.node_a, theta, x) - self._phase(br.node_b, theta, x)
            if br.node_a == self.netlist.terminal:
                cur += br.current(drop)
            elif br.node_b == self.netlist.terminal:
                cur -= br.current(drop)
        return cur

    def solve(self, theta: float, x0: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
        x = x0.copy()
        if not self.nodes:
            return x
        mu = 0.0
        f = self.residual(theta, x)
        best = np.linalg.norm(f, np.inf)
        for _ in range(max_iter):
            if best <= tol * self.scale:
                return x
            jac = self.jacobian(theta, x)
            try:
                if mu > 0.0:
                    step = np.linalg.solve(jac + mu * self.scale * np.eye(len(x)), -f)
                else:
                    step = np.linalg.solve(jac, -f)
            except np.linalg.LinAlgError:
                mu = max(mu * 10.0, 1e-6)
                continue
            lam = 1.0
            improved = False
            for _ in range(25):
                xn = x + lam * step
                fn = self.residual(theta, xn)
                nn = np.linalg.norm(fn, np.inf)
                if nn < best:
                    x, f, best = xn, fn, nn
                    improved = True
                    break
                lam /= 2.0
            if improved:
                mu /= 4.0 if mu > 1e-12 else 1.0
            else:
                mu = max(mu * 10.0, 1e-6)
                if mu > 1e6:
                    break
        if best <= tol * self.scale:
            return x
        raise NonconvergenceError(
            f"internal node solve stalled at terminal phase {theta:.6g} "
            f"(residual {best / self.scale:.3g} relative)"
        )


def element_cpr_from_netlist(
    netlist: Netlist,
    check_range: tuple[float, float] = DEFAULT_CHECK_RANGE,
    grid_points: int = 2048,
    tol: float = 1e-10,
    max_iter: int = 60,
    jump_tol: float = 1.0,
) -> CurrentPhaseRelation:
    """Tabulate an element CPR by solving the internal statics on a grid.

    The internal node phases are continued along the grid, warm-started from
    the neighboring point.  A discontinuity larger than ``jump_tol`` between
    neighboring solutions indicates a fold onto another solution branch.

    Returns the element current in amperes versus terminal phase (no
    re-centering; wrap in :func:`block_cpr_from_element` to build a solver
    CPR).
    """
    statics = _NetlistStatics(netlist)
    lo, hi = check_range
    if not lo < hi:
        raise ConfigError("check range must be increasing")
    grid = np.linspace(lo, hi, grid_points)
    m = len(statics.nodes)
    xs = np.zeros((grid_points, m))
    current = np.zeros(grid_points)

    start = int(np.argmin(np.abs(grid)))
    x = statics.solve(grid[start], np.zeros(m), tol, max_iter)
    xs[start] = x
    current[start] = statics.terminal_current(grid[start], x)
    for direction in (1, -1):
        x = xs[start].copy()
        rng = range(start + 1, grid_points) if direction == 1 else range(start - 1, -1, -1)
        for i in rng:
            x_new = statics.solve(grid[i], x, tol, max_iter)
            if m and np.max(np.abs(x_new - x)) > jump_tol:
                raise BranchAmbiguityError(
                    f"internal solution jumped by {np.max(np.abs(x_new - x)):.3g} rad "
                    f"at terminal phase {grid[i]:.4g}: multiple static branches"
                )
            xs[i] = x_new
            current[i] = statics.terminal_current(grid[i], x_new)
            x = x_new

    spline = CubicSpline(grid, current)
    d_spline = spline.derivative()
    e_spline = spline.antiderivative()
    e0 = float(e_spline(0.0))

    return CurrentPhaseRelation(
        lambda p: spline(p),
        lambda p: e_spline(p) - e0,
        lambda p: d_spline(p),
        check_range=check_range,
        tabulated=True,
        source="netlist",
        meta={
            "netlist": netlist,
            "grid": grid,
            "node_phases": xs,
            "element_current_amps": lambda p: spline(p),
            "spline": spline,
        },
    )


def _uniform_ppoly_scalar(spline: CubicSpline, transform: Callable[[float], float]):
    # Fast scalar cubic evaluation; grid is uniform by construction.
    xk = spline.x
    x0 = float(xk[0])
    h = float(xk[1] - xk[0])
    nseg = len(xk) - 1
    c3, c2, c1, c0 = (np.ascontiguousarray(spline.c[i]) for i in range(4))

    def j_scalar(phi: float) -> float:
        x = transform(phi)
        i = int((x - x0) / h)
        if i < 0 or i >= nseg:
            raise RangeExceededError(
                f"phase {x:.4g} outside tabulated range; enlarge the check range"
            )
        t = x - (x0 + i * h)
        return ((c3[i] * t + c2[i]) * t + c1[i]) * t + c0[i]

    return j_scalar


def block_cpr_from_element(
    element: CurrentPhaseRelation,
    n: int,
    ctx: UnitContext,
    require_monotonic: bool = True,
    monotonic_points: int = 100,
) -> CurrentPhaseRelation:
    """Lumped block CPR for ``n`` identical elements in series (equal division).

    The element CPR must be monotonic for the equal-division assumption to
    hold; the block is re-centered on the element equilibrium.
    """
    lo, hi = element.check_range
    if require_monotonic and not element.is_monotonic(points=monotonic_points):
        raise MonotonicityError(
            "element current-phase relation is nonmonotonic on the check grid; "
            "repeating-element blocks require monotonic elements"
        )
    j_lo, j_hi = float(element.j(lo)), float(element.j(hi))
    if not j_lo < 0.0 < j_hi:
        raise ConfigError("element current does not bracket zero on the check range")
    u_star = float(brentq(lambda u: float(element.j(u)), lo, hi, xtol=1e-14))

    scale = ctx.time_scale**2 / (ctx.c_farads * PHI0)
    e_star = float(element.energy(u_star))

    def j(phi):
        return scale * element.j(np.asarray(phi, dtype=float) / n + u_star)

    def dj(phi):
        return (scale / n) * element.dj(np.asarray(phi, dtype=float) / n + u_star)

    def energy(phi):
        u = np.asarray(phi, dtype=float) / n + u_star
        return scale * n * (element.energy(u) - e_star)

    spline = element.meta.get("spline")
    if spline is not None:
        j_elem_scalar = _uniform_ppoly_scalar(spline, lambda p: p / n + u_star)
        j_scalar = lambda p: scale * j_elem_scalar(p)
    else:
        j_scalar = lambda p: scale * float(element.j(p / n + u_star))

    meta = dict(element.meta)
    meta.update(
        {
            "element_cpr": element,
            "element_equilibrium": u_star,
            "n_elements": n,
        }
    )
    return CurrentPhaseRelation(
        j,
        energy,
        dj,
        j_scalar=j_scalar,
        check_range=((lo - u_star) * n, (hi - u_star) * n),
        tabulated=element.tabulated,
        source=f"{element.source} x{n}",
        context=ctx,
        meta=meta,
    )


@dataclass(frozen=True)
class ExtendedRfSquidElement:
    """Flux-biased loop shunted by a current-biased junction string.

    The repeating element is a loop (inductance ``inductance`` in parallel
    with a junction of critical current ``i_c1`` and flux offset ``phi_ext``)
    shunted by ``n_shunt_junctions`` identical junctions of critical current
    ``i_c2`` in series with ``shunt_inductance``; a bias current ``j_ext`` is
    injected at the node joining the junction string and the shunt inductor.
    A negative ``i_c2`` is a literal sign flip of the junction current (the
    physical realization is a flux-biased two-junction loop).
    """

    inductance: float
    i_c1: float
    i_c2: float
    shunt_inductance: float
    phi_ext: float
    j_ext: float
    n_shunt_junctions: int = 3

    def netlist(self) -> Netlist:
        branches = [
            Branch(TERMINAL, GROUND, "inductor", inductance=self.inductance),
            Branch(
                TERMINAL,
                GROUND,
                "junction",
                critical_current=self.i_c1,
                phase_offset=self.phi_ext,
            ),
        ]
        prev = TERMINAL
        for k in range(self.n_shunt_junctions):
            node = f"s{k + 1}"
            branches.append(
                Branch(prev, node, "junction", critical_current=self.i_c2)
            )
            prev = node
        branches.append(Branch(prev, GROUND, "inductor", inductance=self.shunt_inductance))
        return Netlist(tuple(branches), current_bias={prev: self.j_ext})

    def as_dict(self) -> dict:
        return {
            "inductance": self.inductance,
            "i_c1": self.i_c1,
            "i_c2": self.i_c2,
            "shunt_inductance": self.shunt_inductance,
            "phi_ext": self.phi_ext,
            "j_ext": self.j_ext,
            "n_shunt_junctions": self.n_shunt_junctions,
        }


def extended_rf_squid_block_cpr(
    element: ExtendedRfSquidElement,
    n: int,
    capacitance: float,
    k_rate: float,
    f_pump_hz: float,
    check_range: tuple[float, float] = DEFAULT_CHECK_RANGE,
    grid_points: int = 2048,
    require_monotonic: bool = True,
) -> CurrentPhaseRelation:
    """Block CPR for a chain of extended elements (interpretive preset wiring)."""
    ctx = UnitContext(capacitance, 1.0 / (capacitance * k_rate), f_pump_hz)
    elem_cpr = element_cpr_from_netlist(element.netlist(), check_range, grid_points)
    cpr = block_cpr_from_element(elem_cpr, n, ctx, require_monotonic=require_monotonic)
    cpr.meta["element"] = element
    return cpr


# ---------------------------------------------------------------------------
# Penalties
# ---------------------------------------------------------------------------

PENALTY_MODES = ("sign-definite", "grid-monotonic", "analytic-rf-squid")


@dataclass
class PenaltyConfig:
    """Stability/monotonicity penalty settings.

    ``current_unit`` rescales currents before the tanh offsets of the
    grid-monotonic mode; physical (ampere-level) relations default to
    microamperes, normalized relations to 1.
    """

    lam: float = 1e3
    phi_minus: float = -6.0 * math.pi
    phi_plus: float = 6.0 * math.pi
    grid_points: int = 100
    mode: str = "sign-definite"
    current_unit: float | None = None

    def __post_init__(self):
        if self.mode not in PENALTY_MODES:
            raise ConfigError(f"unknown penalty mode {self.mode!r}")
        if self.lam < 0:
            raise ConfigError("penalty factor must be nonnegative")


@dataclass(frozen=True)
class PenaltyBreakdown:
    penalty: float
    i_max_minus: float | None = None
    i_min_plus: float | None = None
    delta_i_min: float | None = None
    ic_l_ratio: float | None = None


def penalty_report(cpr: CurrentPhaseRelation, cfg: PenaltyConfig) -> PenaltyBreakdown:
    """Evaluate the penalty with its derived quantities."""
    if cfg.grid_points < 3:
        raise ConfigError("penalty grid needs at least 3 points")
    if not cfg.phi_minus < cfg.phi_plus:
        raise ConfigError("penalty range must satisfy phi_minus < phi_plus")

    if cfg.mode == "sign-definite":
        if not cfg.phi_minus < 0.0 < cfg.phi_plus:
            raise ConfigError("sign-definite penalty range must straddle zero")
        half = max(cfg.grid_points // 2, 2)
        neg = np.linspace(cfg.phi_minus, 0.0, half, endpoint=False)
        pos = np.linspace(cfg.phi_plus, 0.0, half, endpoint=False)[::-1]
        i_max_minus = float(np.max(cpr.j(neg)))
        i_min_plus = float(np.min(cpr.j(pos)))
        pen = cfg.lam * (max(0.0, i_max_minus) + max(0.0, -i_min_plus))
        return PenaltyBreakdown(pen, i_max_minus=i_max_minus, i_min_plus=i_min_plus)

    if cfg.mode == "grid-monotonic":
        fn = cpr.meta.get("element_current_amps")
        unit = cfg.current_unit
        if fn is None:
            fn = cpr.j
            unit = 1.0 if unit is None else unit
        elif unit is None:
            unit = 1e-6
        grid = np.linspace(cfg.phi_minus, cfg.phi_plus, cfg.grid_points)
        delta = float(np.min(np.diff(np.asarray(fn(grid), dtype=float)))) / unit
        pen = cfg.lam * (math.tanh(-delta - 0.1) + 1.0)
        return PenaltyBreakdown(pen, delta_i_min=delta)

    # analytic-rf-squid
    ratio = cpr.meta.get("ic_l_over_phi0")
    if ratio is None:
        raise ConfigError("analytic penalty requires a loop-chain current-phase relation")
    pen = cfg.lam * (math.tanh(20.0 * (ratio - 1.15)) + 1.0)
    return PenaltyBreakdown(pen, ic_l_ratio=float(ratio))


def evaluate_penalty(cpr: CurrentPhaseRelation, cfg: PenaltyConfig) -> float:
    """Nonnegative stability penalty; zero (sign-definite mode) or
    vanishingly small (tanh modes) when the configured condition holds."""
    return penalty_report(cpr, cfg).penalty


def analytic_rf_squid_penalty(ic_l_ratio: float, lam: float = 1e3) -> float:
    """Soft-wall penalty on the element monotonicity ratio i_c L / phi0."""
    return lam * (math.tanh(20.0 * (ic_l_ratio - 1.15)) + 1.0)
