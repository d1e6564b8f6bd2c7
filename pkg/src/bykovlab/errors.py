"""Exception hierarchy.

Three families map onto distinct CLI exit codes: configuration problems,
numerical failures and searches that come back empty.
"""


class BykovError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(BykovError, ValueError):
    exit_code = 2


class RegimeViolation(ConfigError):
    """Parameters outside the organizing-center regime a2 < 0 < a1, a1 + a2 > 0."""


class NumericalFailure(BykovError, RuntimeError):
    exit_code = 3


class NotFound(BykovError, LookupError):
    exit_code = 4


class ReducedSystemUndefined(ConfigError):
    pass


class NotTangent(NumericalFailure):
    pass


class StepSizeUnderflow(NumericalFailure):
    pass


class MaxTimeExceeded(NumericalFailure):
    pass


class NoReturn(NumericalFailure):
    pass


class NewtonDiverged(NumericalFailure):
    pass


class OnStableManifold(NumericalFailure):
    pass


class LeftDomain(NumericalFailure):
    pass


class BelowN0(ConfigError):
    pass


class TooFewSamples(ConfigError):
    pass


class NoPassage(NotFound):
    pass


class TruncationTooShort(NumericalFailure):
    pass


class DegenerateAmplitude(NumericalFailure):
    pass


class ManifoldEscape(NumericalFailure):
    pass


class EscapedSphere(NumericalFailure):
    pass


class NoConvergence(NumericalFailure):
    pass


class PartialCurve(NumericalFailure):
    pass


class FoldNotFound(NotFound):
    pass


class CurvesTooClose(ConfigError):
    pass


class BudgetExceeded(NumericalFailure):
    pass


class LostCurve(NumericalFailure):
    pass


class ShadowingNotFound(NotFound):
    pass


class IoFailure(BykovError, OSError):
    exit_code = 5
