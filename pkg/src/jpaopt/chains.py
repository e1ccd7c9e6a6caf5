"""Analytic amplifier-chain composition.

A cascade of stages with power gains ``G_i`` and PAEs ``eta_i`` has total
gain ``prod G_i`` and total PAE

    eta_tot = (G_tot - 1) / sum_i [ (G_i - 1)/eta_i * prod_{k<i} G_k ],

which is bounded by the best and worst stage PAE.  Stage PAEs are read from
an efficiency-versus-gain curve produced by the optimizer; since cascaded
ripple budgets shrink per stage, the curve can be evaluated at a per-stage
ripple tolerance when it carries full gain-curve data.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import ConfigError, ExtrapolationError


@dataclass(frozen=True)
class StageSpec:
    """One amplifier stage: linear power gain and PAE."""

    gain: float
    eta: float

    def __post_init__(self):
        if self.gain < 1.0:
            raise ConfigError(f"stage gain {self.gain:g} must be >= 1")
        if not 0.0 < self.eta <= 1.0:
            raise ConfigError(f"stage PAE {self.eta:g} must lie in (0, 1]")

    @property
    def gain_db(self) -> float:
        return 10.0 * math.log10(self.gain)


def chain_total(stages: Sequence[StageSpec]) -> tuple[float, float]:
    """Total (gain, PAE) of a cascade."""
    if not stages:
        raise ConfigError("chain needs at least one stage")
    g_tot = 1.0
    denom = 0.0
    for st in stages:
        denom += (st.gain - 1.0) / st.eta * g_tot
        g_tot *= st.gain
    if denom == 0.0:
        # every stage is a unit-gain passthrough
        return g_tot, 1.0
    return g_tot, (g_tot - 1.0) / denom


def compose_pair(a: StageSpec, b: StageSpec) -> StageSpec:
    """Two-stage composition as an equivalent single stage."""
    g, eta = chain_total([a, b])
    return StageSpec(g, eta)


def _eta_at_ripple(
    a_s: np.ndarray, gain_db: np.ndarray, eta: np.ndarray, g_target_db: float, ripple_db: float
) -> float:
    """Max PAE below the first |gain - target| > ripple crossing."""
    dev = np.abs(gain_db - g_target_db)
    out = dev > ripple_db
    if out[0]:
        return 0.0
    if not out.any():
        return float(np.max(eta))
    i = int(np.argmax(out))
    # linear interpolation of the crossing between samples i-1 and i
    f = (ripple_db - dev[i - 1]) / (dev[i] - dev[i - 1])
    eta_cross = eta[i - 1] + f * (eta[i] - eta[i - 1])
    return float(max(np.max(eta[:i]), eta_cross))


class EtaCurve:
    """PAE versus target gain, with monotone interpolation across knots.

    Built either from a plain ``(gain_db, eta)`` table at one fixed ripple
    tolerance, or from per-knot gain-curve data (arrays of amplitude, gain
    and PAE for each optimized design), in which case the PAE can be
    evaluated at any ripple tolerance up to the stored band.
    """

    def __init__(self, knots_db: Sequence[float], records: list[dict] | None, etas: Sequence[float] | None, ripple_db: float | None):
        order = np.argsort(np.asarray(knots_db, dtype=float))
        self.knots_db = np.asarray(knots_db, dtype=float)[order]
        if len(self.knots_db) < 2:
            raise ConfigError("efficiency curve needs at least two knots")
        self.records = [records[i] for i in order] if records is not None else None
        self._fixed_etas = np.asarray(etas, dtype=float)[order] if etas is not None else None
        self.ripple_db = ripple_db
        self._interp_cache: dict[float, PchipInterpolator] = {}
        if self._fixed_etas is not None and np.any(
            (self._fixed_etas <= 0) | (self._fixed_etas > 1.0)
        ):
            raise ConfigError("curve PAE values must lie in (0, 1]")

    @classmethod
    def from_table(cls, gains_db: Sequence[float], etas: Sequence[float], ripple_db: float | None = None) -> "EtaCurve":
        return cls(gains_db, None, etas, ripple_db)

    @classmethod
    def from_csv(cls, path, ripple_db: float | None = None) -> "EtaCurve":
        gains, etas = [], []
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                gains.append(float(row["gain_db"]))
                etas.append(float(row["eta"]))
        return cls.from_table(gains, etas, ripple_db)

    def to_csv(self, path, ripple_db: float | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("gain_db,eta\n")
            for g in self.knots_db:
                fh.write(f"{g:.11e},{self.eta(g, ripple_db):.11e}\n")

    @classmethod
    def from_design_data(cls, records: list[dict]) -> "EtaCurve":
        """Per-knot gain curves: each record has ``g_target_db``, ``a_s``,
        ``gain_db`` and ``eta`` arrays sampled to the +-1 dB saturation."""
        knots = [float(r["g_target_db"]) for r in records]
        recs = [
            {
                "a_s": np.asarray(r["a_s"], dtype=float),
                "gain_db": np.asarray(r["gain_db"], dtype=float),
                "eta": np.asarray(r["eta"], dtype=float),
                "g_target_db": float(r["g_target_db"]),
            }
            for r in records
        ]
        return cls(knots, recs, None, None)

    @classmethod
    def from_design_json(cls, path) -> "EtaCurve":
        with open(path, encoding="utf-8") as fh:
            return cls.from_design_data(json.load(fh)["designs"])

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots_db[0]), float(self.knots_db[-1])

    def _values_at_ripple(self, ripple_db: float) -> np.ndarray:
        values = np.empty(len(self.knots_db))
        for i, rec in enumerate(self.records):
            values[i] = _eta_at_ripple(
                rec["a_s"], rec["gain_db"], rec["eta"], rec["g_target_db"], ripple_db
            )
        return values

    def _interp(self, ripple_db: float | None) -> PchipInterpolator:
        if self._fixed_etas is not None:
            if ripple_db is not None and self.ripple_db is not None and not math.isclose(
                ripple_db, self.ripple_db
            ):
                raise ConfigError(
                    f"curve tabulated at ripple {self.ripple_db} dB cannot be "
                    f"re-evaluated at {ripple_db} dB"
                )
            key = -1.0
            values = self._fixed_etas
        else:
            if ripple_db is None:
                ripple_db = 1.0
            key = float(ripple_db)
            values = None
        if key not in self._interp_cache:
            if values is None:
                values = self._values_at_ripple(key)
            positive = values > 0.0
            if not positive.all():
                values = np.clip(values, 1e-12, 1.0)
            self._interp_cache[key] = PchipInterpolator(self.knots_db, values)
        return self._interp_cache[key]

    def eta(self, gain_db: float, ripple_db: float | None = None) -> float:
        lo, hi = self.domain
        if gain_db < lo - 1e-9 or gain_db > hi + 1e-9:
            raise ExtrapolationError(
                f"gain {gain_db:.3f} dB outside the curve domain [{lo:.3f}, {hi:.3f}] dB"
            )
        return float(self._interp(ripple_db)(np.clip(gain_db, lo, hi)))

    def covers(self, gain_db: float) -> bool:
        lo, hi = self.domain
        return lo - 1e-9 <= gain_db <= hi + 1e-9


def best_two_split(
    curve: EtaCurve,
    g_total_db: float = 20.0,
    step_db: float = 0.1,
    stage_ripple_db: float = 0.5,
) -> tuple[float, float, float]:
    """Best gain split of a two-stage chain.

    Scans ``G1`` over ``[0, G_total]`` dB in ``step_db`` steps with
    ``G2 = G_total - G1``; each stage's PAE is read at ``stage_ripple_db``
    ripple (half the chain budget by default).  Grid points outside the curve
    domain are infeasible; zero-gain endpoints are passthroughs.  Ties break
    toward the equal split.
    """
    best: tuple[float, float, float] | None = None
    n_steps = int(round(g_total_db / step_db))
    feasible = 0
    for i in range(n_steps + 1):
        g1_db = i * step_db
        g2_db = g_total_db - g1_db
        stages = []
        ok = True
        for g_db in (g1_db, g2_db):
            if g_db <= 0.0:
                continue  # passthrough stage
            if not curve.covers(g_db):
                ok = False
                break
            stages.append(StageSpec(10.0 ** (g_db / 10.0), curve.eta(g_db, stage_ripple_db)))
        if not ok or not stages:
            continue
        feasible += 1
        _, eta_tot = chain_total(stages)
        if (
            best is None
            or eta_tot > best[2] + 1e-12
            or (
                abs(eta_tot - best[2]) <= 1e-12
                and abs(g1_db - g2_db) < abs(best[0] - best[1])
            )
        ):
            best = (g1_db, g2_db, eta_tot)
    if best is None or feasible == 0:
        raise ExtrapolationError(
            "efficiency curve does not cover any feasible two-stage split"
        )
    return best


def n_stage_scaling(
    curve: EtaCurve,
    g_total_db: float = 20.0,
    n_values: Sequence[int] = range(1, 16),
    total_ripple_db: float = 1.0,
) -> list[tuple[int, float, float]]:
    """Equal-gain chains: ``(n, per-stage gain dB, total PAE)`` per ``n``.

    Each of the ``n`` stages runs at ``G_total/n`` dB with a ripple budget of
    ``total_ripple_db / n``.
    """
    rows = []
    for n in n_values:
        if n < 1:
            raise ConfigError("stage count must be positive")
        g_db = g_total_db / n
        if not curve.covers(g_db):
            raise ExtrapolationError(
                f"per-stage gain {g_db:.3f} dB outside the curve domain"
            )
        eta = curve.eta(g_db, total_ripple_db / n)
        stages = [StageSpec(10.0 ** (g_db / 10.0), eta)] * n
        _, eta_tot = chain_total(stages)
        rows.append((n, g_db, eta_tot))
    return rows
