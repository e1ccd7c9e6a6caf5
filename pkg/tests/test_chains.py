import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jpaopt.chains import (
    EtaCurve,
    StageSpec,
    best_two_split,
    chain_total,
    compose_pair,
    n_stage_scaling,
)
from jpaopt.errors import ConfigError, ExtrapolationError


class TestChainTotal:
    def test_single_stage_identity(self):
        g, eta = chain_total([StageSpec(100.0, 0.633)])
        assert g == 100.0
        assert eta == pytest.approx(0.633, rel=1e-15)

    def test_equal_eta_chain_keeps_eta(self):
        for split in ((10.0, 10.0), (4.0, 25.0), (2.0, 50.0)):
            g, eta = chain_total([StageSpec(split[0], 0.41), StageSpec(split[1], 0.41)])
            assert g == pytest.approx(100.0)
            assert eta == pytest.approx(0.41, rel=1e-12)

    def test_closed_form_two_stage(self):
        g1, g2, e1, e2 = 15.849, 6.3096, 0.82, 0.92
        g, eta = chain_total([StageSpec(g1, e1), StageSpec(g2, e2)])
        expected = (g1 * g2 - 1.0) / ((g1 - 1.0) / e1 + g1 * (g2 - 1.0) / e2)
        assert eta == pytest.approx(expected, rel=1e-14)

    def test_invalid_stages_rejected(self):
        with pytest.raises(ConfigError):
            StageSpec(0.5, 0.5)
        with pytest.raises(ConfigError):
            StageSpec(10.0, 0.0)
        with pytest.raises(ConfigError):
            StageSpec(10.0, 1.2)
        with pytest.raises(ConfigError):
            chain_total([])

    def test_pairwise_composition_matches_closed_form(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            stages = [
                StageSpec(float(g), float(e))
                for g, e in zip(rng.uniform(1.0, 40.0, 4), rng.uniform(0.05, 1.0, 4))
            ]
            left = stages[0]
            for s in stages[1:]:
                left = compose_pair(left, s)
            g, eta = chain_total(stages)
            assert left.gain == pytest.approx(g, rel=1e-12)
            assert left.eta == pytest.approx(eta, rel=1e-12)

    def test_sandwich_bound_on_seeded_ensemble(self):
        # bounded by the best and worst stage PAE, checked exactly
        rng = np.random.default_rng(123)
        for _ in range(10_000):
            n = int(rng.integers(1, 6))
            gains = rng.uniform(1.0 + 1e-9, 100.0, n)
            etas = rng.uniform(1e-3, 1.0, n)
            _, eta_tot = chain_total([StageSpec(float(g), float(e)) for g, e in zip(gains, etas)])
            lo, hi = float(np.min(etas)), float(np.max(etas))
            assert lo * (1.0 - 1e-12) <= eta_tot <= hi * (1.0 + 1e-12)

    @given(
        gains=st.lists(st.floats(1.0001, 1000.0), min_size=1, max_size=6),
        etas=st.lists(st.floats(0.001, 1.0), min_size=6, max_size=6),
    )
    @settings(max_examples=200, deadline=None)
    def test_sandwich_bound_property(self, gains, etas):
        stages = [StageSpec(g, e) for g, e in zip(gains, etas)]
        _, eta_tot = chain_total(stages)
        used = etas[: len(stages)]
        assert min(used) - 1e-12 <= eta_tot <= max(used) + 1e-12

    def test_monotone_in_stage_eta(self):
        base = [StageSpec(10.0, 0.5), StageSpec(10.0, 0.7)]
        _, eta0 = chain_total(base)
        _, eta1 = chain_total([StageSpec(10.0, 0.6), StageSpec(10.0, 0.7)])
        _, eta2 = chain_total([StageSpec(10.0, 0.5), StageSpec(10.0, 0.8)])
        assert eta1 > eta0
        assert eta2 > eta0


def _constant_curve(value=0.5):
    return EtaCurve.from_table(np.linspace(0.5, 21.0, 30), np.full(30, value))


class TestEtaCurve:
    def test_interpolation_through_knots(self):
        curve = EtaCurve.from_table([1.0, 10.0, 20.0], [0.9, 0.7, 0.6])
        assert curve.eta(10.0) == pytest.approx(0.7)
        assert 0.6 < curve.eta(15.0) < 0.7

    def test_extrapolation_refused(self):
        curve = EtaCurve.from_table([5.0, 20.0], [0.8, 0.6])
        with pytest.raises(ExtrapolationError):
            curve.eta(25.0)
        with pytest.raises(ExtrapolationError):
            curve.eta(1.0)

    def test_ripple_aware_lookup(self):
        # per-knot gain curves: tighter ripple gives smaller usable range
        a = np.linspace(0.01, 1.0, 200)
        records = []
        for g_t in (6.0, 10.0, 14.0):
            gain_db = g_t - (a / 0.8) ** 4  # slow compression
            eta = (10 ** (gain_db / 10.0) - 1.0) * a**2 / 1.0
            eta = eta / np.max(eta) * 0.9
            records.append({"g_target_db": g_t, "a_s": a, "gain_db": gain_db, "eta": eta})
        curve = EtaCurve.from_design_data(records)
        assert curve.eta(10.0, ripple_db=1.0) > curve.eta(10.0, ripple_db=0.1)

    def test_csv_round_trip(self, tmp_path):
        curve = EtaCurve.from_table([1.0, 10.0, 20.0], [0.9, 0.7, 0.6])
        path = tmp_path / "eta.csv"
        curve.to_csv(path)
        back = EtaCurve.from_csv(path)
        assert back.eta(12.0) == pytest.approx(curve.eta(12.0), rel=1e-9)


class TestTwoSplit:
    def test_constant_curve_ties_break_to_equal_split(self):
        g1, g2, eta = best_two_split(_constant_curve(), 20.0)
        assert g1 == pytest.approx(10.0, abs=0.051)
        assert g2 == pytest.approx(10.0, abs=0.051)
        assert eta == pytest.approx(0.5, rel=1e-9)

    def test_decreasing_curve_against_fine_grid(self):
        gains = np.linspace(0.5, 21.0, 60)
        etas = np.clip(1.0 - 0.02 * gains, 0.05, 1.0)
        curve = EtaCurve.from_table(gains, etas)
        g1, g2, eta = best_two_split(curve, 20.0, step_db=0.1)
        g1f, g2f, etaf = best_two_split(curve, 20.0, step_db=0.01)
        assert abs(g1 - g1f) <= 0.1 + 1e-9
        assert eta == pytest.approx(etaf, abs=1e-3)

    def test_insufficient_curve_refused(self):
        curve = EtaCurve.from_table([30.0, 40.0], [0.5, 0.4])
        with pytest.raises(ExtrapolationError):
            best_two_split(curve, 20.0)


class TestNStage:
    def test_constant_curve_gives_constant_total(self):
        rows = n_stage_scaling(_constant_curve(0.37), 20.0, range(1, 16))
        for n, g_db, eta in rows:
            assert g_db == pytest.approx(20.0 / n)
            assert eta == pytest.approx(0.37, rel=1e-9)

    def test_out_of_domain_per_stage_gain_refused(self):
        curve = EtaCurve.from_table([5.0, 21.0], [0.8, 0.6])
        with pytest.raises(ExtrapolationError):
            n_stage_scaling(curve, 20.0, [15])
