import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jpaopt.circuits import (
    Branch,
    Netlist,
    PenaltyConfig,
    PolynomialBlock,
    RfSquidChain,
    block_cpr_from_element,
    element_cpr_from_netlist,
    evaluate_penalty,
    penalty_report,
    polynomial_cpr,
    rf_squid_chain_cpr,
)
from jpaopt.errors import (
    BranchAmbiguityError,
    ConfigError,
    MonotonicityError,
    NonconvergenceError,
    RangeExceededError,
    StabilityError,
)
from jpaopt.units import PHI0, UnitContext

ORDER6 = PolynomialBlock(1.5444, 0.8642, (1.1221, 1.2617, 0.9072, 0.2224))
CHAIN = RfSquidChain(
    n=10,
    inductance=17.5e-12,
    critical_current=18.8e-6,
    phi_ext=3.09,
    capacitance=0.5e-12,
    k_rate=1.0 / (0.5e-12 * 131.0),
)


class TestPolynomial:
    def test_origin_is_equilibrium(self):
        cpr = polynomial_cpr(PolynomialBlock(1.1, 0.5, (0.3, 0.2)))
        assert cpr.j(0.0) == 0.0
        assert cpr.energy(0.0) == 0.0

    def test_reference_order6_current_value(self):
        cpr = polynomial_cpr(ORDER6)
        phi = 0.1
        expected = (
            1.5444**2 * 0.1
            + 3 * 1.1221 * 0.01
            + 4 * 1.2617 * 0.001
            + 5 * 0.9072 * 1e-4
            + 6 * 0.2224 * 1e-5
        )
        assert cpr.j(phi) == pytest.approx(expected, rel=1e-14)

    def test_pure_linear_inductor(self):
        cpr = polynomial_cpr(PolynomialBlock(1.3, 0.4, (0.0, 1e-30)))
        assert cpr.j(0.5) == pytest.approx(1.3**2 * 0.5)

    def test_odd_order_rejected(self):
        with pytest.raises(StabilityError):
            polynomial_cpr(PolynomialBlock(1.0, 0.5, (0.1, 0.2, 0.3)))

    def test_nonpositive_leading_coefficient_rejected(self):
        with pytest.raises(StabilityError):
            polynomial_cpr(PolynomialBlock(1.0, 0.5, (0.1, -0.2)))

    def test_energy_is_current_integral(self):
        cpr = polynomial_cpr(ORDER6)
        assert cpr.energy_matches_current()
        # quadrature cross-check of E = int J
        from scipy.integrate import quad

        for phi in (0.3, -1.2, 2.0):
            val, _ = quad(lambda s: float(cpr.j(s)), 0.0, phi, epsabs=1e-13, epsrel=1e-12)
            assert cpr.energy(phi) == pytest.approx(val, rel=1e-10)


class TestRfSquidChain:
    def test_z_consistency(self):
        assert CHAIN.z_ohms == pytest.approx(131.0)
        assert 1.0 / (CHAIN.capacitance * CHAIN.k_rate) == pytest.approx(CHAIN.z_ohms)

    def test_recentered_current_vanishes_at_origin(self):
        cpr = rf_squid_chain_cpr(CHAIN, 12e9)
        assert cpr.j(0.0) == pytest.approx(0.0, abs=1e-12)

    def test_raw_bias_current_at_zero_phase(self):
        # before re-centering the flux bias pushes current through the block
        raw = CHAIN.element_current(0.0)
        assert raw == pytest.approx(18.8e-6 * math.sin(3.09), rel=1e-12)

    def test_junction_free_chain_is_linear(self):
        chain = RfSquidChain(
            n=4,
            inductance=20e-12,
            critical_current=0.0,
            phi_ext=0.0,
            capacitance=0.5e-12,
            k_rate=1e10,
        )
        cpr = rf_squid_chain_cpr(chain, 12e9)
        phi = 0.7
        scale = chain.context(12e9).time_scale**2 / (chain.capacitance * PHI0)
        assert cpr.j(phi) == pytest.approx(scale * PHI0 * phi / (4 * 20e-12))

    def test_nonmonotonic_element_rejected(self):
        bad = RfSquidChain(
            n=10,
            inductance=17.5e-12,
            critical_current=30e-6,
            phi_ext=3.09,
            capacitance=0.5e-12,
            k_rate=1e10,
        )
        with pytest.raises(MonotonicityError):
            rf_squid_chain_cpr(bad, 12e9)

    def test_energy_consistent(self):
        cpr = rf_squid_chain_cpr(CHAIN, 12e9)
        assert cpr.energy_matches_current()

    def test_equal_division_scaling(self):
        # block current equals the element current at phi/n (after shifts)
        cpr = rf_squid_chain_cpr(CHAIN, 12e9)
        u_star = cpr.meta["element_equilibrium"]
        scale = CHAIN.context(12e9).time_scale**2 / (CHAIN.capacitance * PHI0)
        phi = 2.4
        elem = CHAIN.element_current(phi / CHAIN.n + u_star)
        assert cpr.j(phi) == pytest.approx(scale * elem, rel=1e-12)


class TestNetlist:
    def test_single_inductor_is_linear(self):
        nl = Netlist((Branch("top", "gnd", "inductor", inductance=50e-12),))
        cpr = element_cpr_from_netlist(nl, check_range=(-3.0, 3.0), grid_points=301)
        for theta in (-2.0, 0.3, 1.7):
            assert float(cpr.j(theta)) == pytest.approx(PHI0 * theta / 50e-12, rel=1e-9)

    def test_two_junctions_split_equally(self):
        ic = 5e-6
        nl = Netlist(
            (
                Branch("top", "mid", "junction", critical_current=ic),
                Branch("mid", "gnd", "junction", critical_current=ic),
            )
        )
        cpr = element_cpr_from_netlist(nl, check_range=(-2.5, 2.5), grid_points=401)
        for theta in (-2.0, -0.5, 0.8, 2.2):
            assert float(cpr.j(theta)) == pytest.approx(ic * math.sin(theta / 2), rel=1e-8)

    def test_chain_matches_analytic_equal_division(self):
        # n identical loops as an explicit netlist against the closed form
        n = 4
        branches = []
        nodes = ["top", "m1", "m2", "m3", "gnd"]
        for a, b in zip(nodes[:-1], nodes[1:]):
            branches.append(Branch(a, b, "inductor", inductance=CHAIN.inductance))
            branches.append(
                Branch(
                    a,
                    b,
                    "junction",
                    critical_current=CHAIN.critical_current,
                    phase_offset=CHAIN.phi_ext,
                )
            )
        elem = element_cpr_from_netlist(
            Netlist(tuple(branches)), check_range=(-8.0, 8.0), grid_points=1601
        )
        grid = np.linspace(-6.0, 6.0, 41)
        expected = CHAIN.element_current(grid / n)
        got = np.asarray(elem.j(grid))
        np.testing.assert_allclose(got, expected, rtol=2e-8, atol=2e-8 * np.max(np.abs(expected)))

    def test_disconnected_netlist_rejected(self):
        nl = Netlist(
            (
                Branch("top", "a", "inductor", inductance=1e-12),
                Branch("b", "gnd", "inductor", inductance=1e-12),
            )
        )
        with pytest.raises(ConfigError):
            element_cpr_from_netlist(nl)

    def test_infeasible_bias_fails_to_converge(self):
        # a 4.65 uA bias cannot flow through a 0.9 uA junction string
        nl = Netlist(
            (
                Branch("top", "s1", "junction", critical_current=0.9e-6),
                Branch("s1", "gnd", "junction", critical_current=0.9e-6),
            ),
            current_bias={"s1": 4.65e-6},
        )
        with pytest.raises(NonconvergenceError):
            element_cpr_from_netlist(nl, check_range=(-2.0, 2.0), grid_points=64)

    def test_tabulated_range_enforced(self):
        nl = Netlist((Branch("top", "gnd", "inductor", inductance=50e-12),))
        cpr = element_cpr_from_netlist(nl, check_range=(-1.0, 1.0), grid_points=51)
        with pytest.raises(RangeExceededError):
            cpr.j(1.5)

    def test_block_from_element_equal_division(self):
        nl = Netlist(
            (
                Branch("top", "gnd", "inductor", inductance=CHAIN.inductance),
                Branch(
                    "top",
                    "gnd",
                    "junction",
                    critical_current=CHAIN.critical_current,
                    phase_offset=CHAIN.phi_ext,
                ),
            )
        )
        elem = element_cpr_from_netlist(nl)
        ctx = UnitContext(CHAIN.capacitance, CHAIN.z_ohms, 12e9)
        blk = block_cpr_from_element(elem, CHAIN.n, ctx)
        ref = rf_squid_chain_cpr(CHAIN, 12e9)
        grid = np.linspace(-20.0, 20.0, 31)
        np.testing.assert_allclose(
            np.asarray(blk.j(grid)), np.asarray(ref.j(grid)), rtol=1e-8, atol=1e-8
        )


class TestPenalties:
    def test_monotonic_sign_definite_is_exactly_zero(self):
        cpr = polynomial_cpr(ORDER6)
        cfg = PenaltyConfig(lam=1e3, phi_minus=-3.0, phi_plus=3.0, mode="sign-definite")
        assert evaluate_penalty(cpr, cfg) == 0.0
        # dense scan confirms no sign violation was missed
        dense = PenaltyConfig(
            lam=1e3, phi_minus=-3.0, phi_plus=3.0, grid_points=1000, mode="sign-definite"
        )
        assert evaluate_penalty(cpr, dense) == 0.0

    def test_sign_dip_detected_and_matches_dense_scan(self):
        # strong negative g3 makes the current dip below zero for phi > 0
        block = PolynomialBlock(1.0, 0.5, (-0.6, 0.08))
        cpr = polynomial_cpr(block)
        cfg = PenaltyConfig(lam=1.0, phi_minus=-4.0, phi_plus=4.0, grid_points=400, mode="sign-definite")
        rep = penalty_report(cpr, cfg)
        assert rep.penalty > 0.0
        grid = np.linspace(1e-9, 4.0, 40001)
        dense_min = float(np.min(cpr.j(grid)))
        assert dense_min < 0.0
        assert rep.i_min_plus == pytest.approx(dense_min, rel=1e-3)
        assert rep.penalty == pytest.approx(-dense_min, rel=1e-3)

    def test_penalty_monotone_in_violation_size(self):
        pens = []
        for g3 in (-0.3, -0.5, -0.7, -0.9):
            cpr = polynomial_cpr(PolynomialBlock(1.0, 0.5, (g3, 0.05)))
            cfg = PenaltyConfig(lam=1.0, phi_minus=-5.0, phi_plus=5.0, grid_points=500, mode="sign-definite")
            pens.append(evaluate_penalty(cpr, cfg))
        assert all(b >= a for a, b in zip(pens, pens[1:]))

    def test_analytic_soft_wall_midpoint(self):
        # at i_c L / phi0 = 1.15 the soft wall sits exactly at lambda
        lam = 123.0
        from jpaopt.circuits import analytic_rf_squid_penalty

        assert analytic_rf_squid_penalty(1.15, lam) == pytest.approx(lam)
        assert analytic_rf_squid_penalty(0.5, lam) < 1e-8 * lam
        assert analytic_rf_squid_penalty(2.0, lam) == pytest.approx(2.0 * lam, rel=1e-6)

    def test_analytic_mode_uses_chain_metadata(self):
        cpr = rf_squid_chain_cpr(CHAIN, 12e9)
        cfg = PenaltyConfig(lam=10.0, mode="analytic-rf-squid")
        rep = penalty_report(cpr, cfg)
        assert rep.ic_l_ratio == pytest.approx(CHAIN.ic_l_over_phi0)
        with pytest.raises(ConfigError):
            evaluate_penalty(polynomial_cpr(ORDER6), cfg)

    def test_grid_monotonic_limits(self):
        # the reference chain is tuned to the monotonicity wall: its minimum
        # sequential current step is near zero and the soft wall is half on
        cfg = PenaltyConfig(lam=1.0, mode="grid-monotonic")
        rep = penalty_report(rf_squid_chain_cpr(CHAIN, 12e9), cfg)
        assert 0.0 < rep.delta_i_min < 0.2
        assert 0.5 < rep.penalty < 1.0
        # a comfortably monotonic element sits deep on the zero side
        import dataclasses

        easy = dataclasses.replace(CHAIN, critical_current=6e-6)
        rep_easy = penalty_report(rf_squid_chain_cpr(easy, 12e9), cfg)
        assert rep_easy.delta_i_min > 4.0
        assert rep_easy.penalty < 1e-3
        # a strongly nonmonotonic element saturates toward 2*lambda
        bad = dataclasses.replace(CHAIN, critical_current=80e-6)
        from jpaopt.multinode import _lumped_cpr_unchecked

        rep_bad = penalty_report(_lumped_cpr_unchecked(bad, 12e9), cfg)
        assert rep_bad.delta_i_min < -4.0
        assert rep_bad.penalty > 1.9

    def test_invalid_ranges_rejected(self):
        cpr = polynomial_cpr(ORDER6)
        with pytest.raises(ConfigError):
            evaluate_penalty(cpr, PenaltyConfig(phi_minus=2.0, phi_plus=-2.0))
        with pytest.raises(ConfigError):
            evaluate_penalty(cpr, PenaltyConfig(grid_points=2))
        with pytest.raises(ConfigError):
            PenaltyConfig(mode="bogus")

    @given(
        g3=st.floats(-1.0, 1.0),
        g4=st.floats(0.01, 2.0),
        omega0=st.floats(0.5, 2.5),
    )
    @settings(max_examples=40, deadline=None)
    def test_penalty_nonnegative_and_zero_iff_sign_definite(self, g3, g4, omega0):
        cpr = polynomial_cpr(PolynomialBlock(omega0, 0.5, (g3, g4)))
        cfg = PenaltyConfig(lam=1.0, phi_minus=-5.0, phi_plus=5.0, grid_points=300, mode="sign-definite")
        pen = evaluate_penalty(cpr, cfg)
        assert pen >= 0.0
        grid = np.concatenate([np.linspace(-5, -1e-9, 3000), np.linspace(1e-9, 5, 3000)])
        violated = bool(np.any(np.sign(grid) * cpr.j(grid) < 0.0))
        if pen == 0.0:
            dense_cfg = PenaltyConfig(
                lam=1.0, phi_minus=-5.0, phi_plus=5.0, grid_points=3000, mode="sign-definite"
            )
            assert evaluate_penalty(cpr, dense_cfg) == pytest.approx(0.0, abs=1e-9)
        else:
            assert violated
