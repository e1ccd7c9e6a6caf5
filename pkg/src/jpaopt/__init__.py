"""Simulation and design-optimization toolkit for pumped nonlinear-inductor
parametric amplifiers coupled to a transmission line."""

__version__ = "0.1.0"

from .circuits import (
    Branch,
    CurrentPhaseRelation,
    ExtendedRfSquidElement,
    Netlist,
    PenaltyConfig,
    PolynomialBlock,
    RfSquidChain,
    block_cpr_from_element,
    element_cpr_from_netlist,
    evaluate_penalty,
    extended_rf_squid_block_cpr,
    polynomial_cpr,
    rf_squid_chain_cpr,
)
from .drive import DriveSpec, Tone, degenerate_drive, nondegenerate_drive, two_tone_drive
from .harmonic_balance import HarmonicLadder, HarmonicState, hb_continuation_sweep, hb_solve
from .timedomain import ScheduleSpec, SteadyStateSolution, extract_tone, integrate_eom, make_schedule
from .units import PHI0, UnitContext
