"""Exception types shared across the package.

Everything raised on purpose derives from :class:`PoissonKitError`, so CLI
code can separate "the input is bad" from genuine bugs.
"""


class PoissonKitError(Exception):
    """Base class for all errors raised by poissonkit."""


class ExprSyntaxError(PoissonKitError):
    """Raised when an expression string cannot be parsed.

    Carries the 0-based character position of the offending token.
    """

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EvalDomainError(PoissonKitError):
    """A scalar evaluation left the real domain (ln of non-positive,
    division by zero, overflow to inf, NaN)."""


class DomainViolation(PoissonKitError):
    """A point left the declared domain.  ``coordinate`` is the 0-based
    index of the violating coordinate (of x, or of a lambda_i value)."""

    def __init__(self, message, coordinate=None):
        super().__init__(message)
        self.coordinate = coordinate


class OutOfImageError(PoissonKitError):
    """An inverse-map argument lies outside the recorded image interval."""


class SkewnessError(PoissonKitError):
    """A matrix required to be exactly skew-symmetric is not."""


class SingularMatrixError(PoissonKitError):
    """Matrix inversion was requested for a rank-deficient matrix."""


class PsiValidationError(PoissonKitError):
    """A scaling function violates its contract (vanishes, changes sign,
    or its anchor lies outside the domain)."""


class StepSizeError(PoissonKitError):
    """The adaptive integrator drove the step size below the usable range."""


class SpecFileError(PoissonKitError):
    """A problem-description file failed validation; the message names the
    offending field."""
