"""Exception hierarchy.

Every error carries the CLI exit code of its class so that scripted
pipelines can tell usage problems from numerical failures.
"""


class LogBNError(Exception):
    exit_code = 1


class UsageError(LogBNError, ValueError):
    exit_code = 2

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class UnsupportedDimensionError(UsageError):
    pass


class ShapeError(UsageError):
    pass


class ConvergenceError(LogBNError, RuntimeError):
    exit_code = 3

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class BracketError(ConvergenceError):
    pass


class NoProjectionError(ConvergenceError):
    pass


class AccuracyError(LogBNError, ArithmeticError):
    exit_code = 4


class DegenerateDomainError(AccuracyError):
    pass


class InvalidFieldError(AccuracyError):
    pass


class ResolutionError(AccuracyError):
    pass


class ScalingError(AccuracyError):
    pass


class RegimeError(LogBNError, ValueError):
    exit_code = 5
