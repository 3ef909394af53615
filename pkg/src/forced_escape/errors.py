"""Exception and warning types raised across the package."""


class ForcedEscapeError(Exception):
    """Base class for all package errors."""


class ConfigError(ForcedEscapeError):
    """Invalid user configuration."""


class NumericalError(ForcedEscapeError):
    """Base class for numerical failures (non-convergence and friends)."""


class NonConvergence(NumericalError):
    pass


class SingularHessian(NumericalError):
    pass


class NonFinite(NumericalError):
    pass


class NotAMinimum(ForcedEscapeError):
    pass


class ZeroMode(ForcedEscapeError):
    pass


class NoCommonPeriod(ForcedEscapeError):
    pass


class NoUnstableDirection(NumericalError):
    pass


class WrongBasin(NumericalError):
    pass


class ResolutionError(ForcedEscapeError):
    pass


class DivisionByNearZero(NumericalError):
    pass


class OutOfWellEnergy(ForcedEscapeError):
    pass


class NotStationary(ForcedEscapeError):
    pass


class IncompatibleBox(ForcedEscapeError):
    pass


class RelaxedToPerfect(NumericalError):
    pass


class WrongConnectivity(NumericalError):
    pass


class AllCensored(NumericalError):
    pass


class ResolutionWarning(UserWarning):
    """Forcing phase advances too much per time step for trapezoid accuracy."""


class NegativeExponent(UserWarning):
    """First-order rate exponent turned negative (forcing too strong)."""


class RegimeWarning(UserWarning):
    """Simulation parameters lie outside the regime the asymptotics assume."""
