"""Exception types raised across the package."""


class RegulatorError(Exception):
    """Base class for all errors raised by this package."""


class IntegrationBlowup(RegulatorError):
    """A Runge-Kutta stage produced a non-finite value."""

    def __init__(self, t, message=None):
        self.t = float(t)
        super().__init__(message or f"non-finite state encountered at t={self.t:.6g}")


class NotPositiveDefinite(RegulatorError):
    """Cholesky factorization failed (matrix not symmetric positive definite)."""


class CorruptedState(RegulatorError):
    """Identifier state is no longer usable (e.g. sigma1 + Gamma lost definiteness)."""


class ShapeMismatch(RegulatorError, ValueError):
    pass


class ModelEvaluationError(RegulatorError):
    """A plant map returned a non-finite value."""

    def __init__(self, name, index, value):
        self.name = name
        self.index = index
        self.value = value
        super().__init__(f"plant map {name!r} returned non-finite value {value!r} at index {index}")


class SingularGram(RegulatorError):
    """The high-frequency matrix is rank deficient, so no friend input exists."""


class SingularAttitude(RegulatorError):
    """The VTOL roll angle reached the model validity boundary |p3| >= pi/2."""


class DivergedRun(RegulatorError):
    """Metrics were requested from a run that diverged."""


class ConfigError(RegulatorError):
    """Invalid configuration text; carries the offending line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
