"""Exception hierarchy shared by every module."""


class SwitchedKKTError(Exception):
    """Base class for all errors raised by this package."""


class InvalidProblem(SwitchedKKTError, ValueError):
    pass


class FormatError(SwitchedKKTError, ValueError):
    """A problem or report file could not be parsed.

    ``where`` names the offending field (or line) when known.
    """

    def __init__(self, message, where=None):
        super().__init__(message if where is None else f"{where}: {message}")
        self.where = where


class EvaluationError(SwitchedKKTError, ArithmeticError):
    """A problem callback returned a non-finite value."""

    def __init__(self, message, index=None):
        super().__init__(message if index is None else f"{message} (component {index})")
        self.index = index


class NumericalError(SwitchedKKTError, ArithmeticError):
    pass


class RankError(NumericalError):
    """Active-constraint Jacobian lost full row rank."""


class StructuralError(SwitchedKKTError):
    """The active set demands more constraints than decision variables."""


class InfeasibleStart(SwitchedKKTError, ValueError):
    pass


class ChatterGuard(SwitchedKKTError):
    pass


class CapabilityError(SwitchedKKTError):
    pass


class SamplingError(SwitchedKKTError):
    pass


class InfeasibleProblem(SwitchedKKTError):
    pass


class IntegrationFailure(SwitchedKKTError):
    """Wraps a numerical failure mid-run; ``trajectory`` holds the samples so far."""

    def __init__(self, cause, trajectory):
        super().__init__(f"{type(cause).__name__}: {cause}")
        self.cause = cause
        self.trajectory = trajectory
