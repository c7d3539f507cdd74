"""Exception and warning types shared across the package."""


class TheveninError(Exception):
    """Base class for all package errors."""


class ConfigError(TheveninError):
    """Invalid configuration or inconsistent inputs."""


class NumericalError(TheveninError):
    """A numerical routine could not produce a meaningful result."""


class ParseError(TheveninError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingHeader(ParseError):
    pass


class NonMonotoneTime(ParseError):
    pass


class DegenerateDesign(NumericalError):
    """Fewer samples than parameters."""


class SingularInformation(NumericalError):
    """Information matrix is not invertible."""


class EvaluationFailure(NumericalError):
    """Residual or Jacobian produced NaN/Inf."""


class InfeasibleBounds(ConfigError):
    pass


class NonPositivePrior(ConfigError):
    pass


class NonConstantCurrent(ConfigError):
    pass


class EmptyDataset(ConfigError):
    pass


class StudyFailed(NumericalError):
    """Too many Monte Carlo runs failed."""


class SocOutOfRange(UserWarning):
    """State of charge left [0, 1]; model is extrapolated."""
