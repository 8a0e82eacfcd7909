"""Errors raised by the flexrl numerical core and harness."""


class FlexRLError(Exception):
    """Base class for every error raised by flexrl."""


class DomainError(FlexRLError, ValueError):
    """An argument lies outside the domain of a generator or its conjugate."""


class InvalidThreshold(FlexRLError, ValueError):
    """The join point beta is not usable for one of the branches."""


class NonInvertible(FlexRLError, ValueError):
    """A branch derivative is not strictly increasing, so it has no inverse."""


class InvalidCoefficient(FlexRLError, ValueError):
    """A scaling coefficient is not strictly positive."""


class UnknownPreset(FlexRLError, LookupError):
    """No divergence or preset is registered under the requested name."""


class ShapeError(FlexRLError, ValueError):
    """A table does not match the MDP's dimensions."""


class InvalidModel(FlexRLError, ValueError):
    """An MDP, policy, or occupancy table violates its probability invariants."""


class SingularSystem(FlexRLError, ArithmeticError):
    """A linear evaluation system could not be solved."""


class SizeError(FlexRLError, ValueError):
    """A requested environment is larger than supported."""


class CalibrationFailure(FlexRLError, RuntimeError):
    """No behavior checkpoint reaches a requested performance fraction."""


class CoverageError(FlexRLError, ValueError):
    """The dataset support does not cover the states the objective needs."""


class DomainBlowup(FlexRLError, ArithmeticError):
    """An oracle iterate left the conjugate's domain with clipping disabled."""


class Infeasible(FlexRLError, ArithmeticError):
    """The dataset support cannot carry a flow satisfying the constraint."""


class ConvergenceError(FlexRLError, ArithmeticError):
    """A solver exhausted its step budget before meeting its tolerance."""


class NanError(FlexRLError, FloatingPointError):
    """A training table became non-finite."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step

    def __reduce__(self):
        return type(self), (str(self), self.step)


class DegenerateVector(FlexRLError, ValueError):
    """A cosine similarity was requested for a zero-norm vector."""


class ConfigError(FlexRLError, ValueError):
    """A configuration value is invalid or inconsistent."""


class DatasetFormatError(FlexRLError, ValueError):
    """A dataset, checkpoint, or metrics file does not follow its format."""
