"""Exception hierarchy shared by all covsteer modules."""


class CovsteerError(Exception):
    """Base class for every error raised by covsteer."""


class InvalidInputError(CovsteerError, ValueError):
    """Non-finite entries, wrong shapes or otherwise malformed input."""


class DimensionError(InvalidInputError):
    pass


class NotPsdError(InvalidInputError):
    """A matrix required to be positive semi-definite is not."""

    def __init__(self, message, min_eig=None):
        super().__init__(message)
        self.min_eig = min_eig


class StepIndexError(CovsteerError, IndexError):
    """Time/step indices out of order or outside the horizon."""


class AssumptionError(CovsteerError):
    """A structural assumption (e.g. invertible A_k) does not hold."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class SingularityError(CovsteerError, ArithmeticError):
    pass


class NumericalError(CovsteerError, ArithmeticError):
    """Base for failures of a numerical procedure."""


class ConditioningError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass


class NoSolutionError(NumericalError):
    """The Riccati equation has no solution on the requested interval."""

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class NoConvergenceError(NumericalError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SolverError(NumericalError):
    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class InconsistentSolutionError(NumericalError):
    pass


class PreconditionError(CovsteerError):
    """An operation was called outside the region where it is defined."""


class InsufficientDataError(CovsteerError, ValueError):
    """Too few samples for the requested statistic."""


class EscapeError(NoSolutionError):
    """A scalar Riccati solution escapes to infinity at ``escape_time``."""

    def __init__(self, message, escape_time=None):
        super().__init__(message)
        self.escape_time = escape_time
