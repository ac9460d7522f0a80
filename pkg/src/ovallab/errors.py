"""Exception hierarchy.

Every error carries enough context to be reported on a single line by the
CLI. The CLI maps :class:`InputError` subclasses to exit status 1 and
:class:`NumericalError` subclasses to exit status 2.
"""


class OvalLabError(Exception):
    """Base class for all package errors."""


class InputError(OvalLabError, ValueError):
    """Invalid input or violated precondition."""


class ContractViolation(InputError):
    pass


class DomainError(InputError):
    """Argument outside the domain where a formula is defined."""


class PositivityViolation(InputError):
    """Curvature is not strictly positive."""

    def __init__(self, message, s_min=None, kappa_min=None):
        super().__init__(message)
        self.s_min = s_min
        self.kappa_min = kappa_min


class UnsupportedCoupling(InputError):
    pass


class ConfigError(InputError):
    pass


class NumericalError(OvalLabError, RuntimeError):
    """A computation failed or could not be trusted."""


class NumericalFailure(NumericalError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ResolutionError(NumericalError):
    pass


class ProjectionFailure(NumericalError):
    pass


class SamplingFailure(NumericalError):
    pass


class InsufficientBoundStates(NumericalError):
    def __init__(self, message, found=0, requested=0):
        super().__init__(message)
        self.found = found
        self.requested = requested


class NodeError(NumericalError):
    """The pair (u1, u2) has a common zero where an angle is needed."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class FlatMapError(NumericalError):
    pass


class SplittingViolation(NumericalError):
    pass


class DegeneracyError(NumericalError):
    pass


class DegeneracyWarning(UserWarning):
    pass


class ResolutionWarning(UserWarning):
    pass


class RegimeWarning(UserWarning):
    """The requested search runs in a regime where no extremizer is expected."""
