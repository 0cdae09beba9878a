"""Exception hierarchy shared by every stage of the pipeline."""


class LqgRateError(Exception):
    """Base class for all errors raised by this package."""


class NotPositiveDefinite(LqgRateError):
    pass


class NotPSD(LqgRateError):
    pass


class ConvergenceFailure(LqgRateError):
    """An iterative routine hit its iteration cap before meeting tolerance."""


class NoConvergence(ConvergenceFailure):
    pass


class ModelError(LqgRateError):
    """Plant model violates a structural assumption (dimensions, definiteness)."""


class NotStabilizable(ModelError):
    pass


class NotDetectable(ModelError):
    pass


class InfeasibleBudget(LqgRateError):
    """The LQG budget does not exceed the minimum attainable cost Tr(WS)."""


class SolverFailure(LqgRateError):
    pass


class ZeroRank(LqgRateError):
    """The optimal SNR matrix is zero, so no sensor channel is needed."""


class NonFiniteInput(LqgRateError):
    pass


class LengthMismatch(LqgRateError):
    pass


class DegenerateCovariance(LqgRateError):
    pass


class DecodeFailure(LqgRateError):
    pass


class NumericalDivergence(LqgRateError):
    pass


class InsufficientSamples(LqgRateError):
    pass


class QuadratureFailure(LqgRateError):
    pass


class ParseError(LqgRateError):
    """Malformed model or design file; message names the section and line."""
