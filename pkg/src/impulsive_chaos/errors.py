"""Exception hierarchy shared by all modules."""


class ImpulsiveError(Exception):
    """Base class for every error raised by this package."""


class SingularMatrixError(ImpulsiveError):
    pass


class NoPrincipalLogError(ImpulsiveError):
    pass


class ConvergenceError(ImpulsiveError):
    pass


class MatrixOverflowError(ImpulsiveError):
    pass


class ExprError(ImpulsiveError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownFunctionError(ExprSyntaxError):
    pass


class ExprDepthError(ExprSyntaxError):
    pass


class ExprEvalError(ExprError):
    pass


class ParameterError(ImpulsiveError, ValueError):
    pass


class SequenceRangeError(ImpulsiveError, IndexError):
    pass


class HypothesisViolation(ImpulsiveError):
    """An existence/stability assumption does not hold for the system."""


class DecayRateError(ImpulsiveError):
    pass


class IntegrationError(ImpulsiveError):
    def __init__(self, message, last_good_time=None):
        super().__init__(message)
        self.last_good_time = last_good_time


class CoverageError(ImpulsiveError):
    pass


class ConfigError(ImpulsiveError):
    pass
