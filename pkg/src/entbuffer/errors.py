"""Exception types raised across the package.

Every failure mode that callers may want to distinguish gets its own class;
the CLI maps them onto exit codes.
"""


class EntBufferError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(EntBufferError, ValueError):
    """A parameter is outside its mathematical domain."""


class DegenerateProtocolError(EntBufferError):
    """A purification stage can never succeed (zero success probability)."""


class UndefinedJumpError(EntBufferError):
    """Jump function evaluated where the success probability is zero."""


class AdmissibilityError(EntBufferError):
    """Protocol coefficients violate the admissibility constraints."""


class TabulationError(EntBufferError):
    """Requested protocol lies outside the tabulated regime."""


class MissingDataError(EntBufferError):
    """Required externally-tabulated data was not supplied."""


class ConfigurationError(EntBufferError):
    """Inconsistent or malformed run configuration."""


class NoGenerationError(EntBufferError):
    """Entanglement generation is impossible (effective rate is zero)."""


class DivergentExpectationError(EntBufferError):
    """A requested expectation diverges for the given parameters."""


class EvaluationError(EntBufferError):
    """A closed-form expression became degenerate during evaluation."""


class BudgetExceededError(EntBufferError):
    """Enumeration budget exhausted before reaching the requested accuracy.

    Carries the partial result (with its honest, wider bracket) so callers
    can decide whether it is still useful.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
