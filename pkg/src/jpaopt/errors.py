"""Exception hierarchy and process exit codes."""

from __future__ import annotations


class JpaoptError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(JpaoptError):
    """Invalid configuration: bad units, missing fields, inconsistent ranges."""


class StabilityError(JpaoptError):
    """Amplifier definition violates a stability requirement (odd order, g_n <= 0)."""


class MonotonicityError(JpaoptError):
    """Element current-phase relation is not monotonic.

    Blocks built from repeating elements require a monotonic element CPR;
    otherwise the phase division across elements is ambiguous and internal
    high-frequency modes get excited.
    """


class NonconvergenceError(JpaoptError):
    """An iterative solve failed to reach its residual tolerance."""


class BranchAmbiguityError(JpaoptError):
    """Internal-node continuation detected multiple solution branches."""


class RangeExceededError(JpaoptError):
    """Phase trajectory left the tabulated CPR range; enlarge the check range."""


class StiffnessError(JpaoptError):
    """Time integrator step size underflowed."""


class DivergenceError(JpaoptError):
    """A node phase blew up during integration."""


class IncommensurableError(JpaoptError):
    """Drive tones have no common period; express frequencies as exact rationals."""


class ToneBinError(JpaoptError):
    """Requested frequency is not an exact DFT bin of the analysis window."""


class LadderTruncationError(JpaoptError):
    """Harmonic ladder too small: discarded-bin energy above tolerance."""


class InsufficientPowerError(JpaoptError):
    """Intermodulation products below the numerical noise floor at all powers."""


class ExtrapolationError(JpaoptError):
    """Requested point lies outside tabulated data; extrapolation refused."""


class UnsaturatedWarning(UserWarning):
    """Gain never left the target band within the scan ceiling."""


class MultiLobeWarning(UserWarning):
    """Gain profile has several disjoint bands satisfying the criterion."""


# CLI exit codes (0 = success).
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_NONCONVERGENCE = 4
EXIT_INSTABILITY = 5

EXIT_CODE_BY_ERROR = {
    ConfigError: EXIT_CONFIG,
    IncommensurableError: EXIT_CONFIG,
    ToneBinError: EXIT_CONFIG,
    ExtrapolationError: EXIT_CONFIG,
    StabilityError: EXIT_INSTABILITY,
    MonotonicityError: EXIT_INSTABILITY,
    BranchAmbiguityError: EXIT_INSTABILITY,
    RangeExceededError: EXIT_INSTABILITY,
    NonconvergenceError: EXIT_NONCONVERGENCE,
    StiffnessError: EXIT_NONCONVERGENCE,
    DivergenceError: EXIT_INSTABILITY,
    LadderTruncationError: EXIT_NONCONVERGENCE,
    InsufficientPowerError: EXIT_NONCONVERGENCE,
}


def exit_code_for(exc: BaseException) -> int:
    for klass, code in EXIT_CODE_BY_ERROR.items():
        if isinstance(exc, klass):
            return code
    return 1
