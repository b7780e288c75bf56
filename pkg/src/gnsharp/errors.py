"""Exception hierarchy shared by every module."""


class GNError(Exception):
    """Base class for all errors raised by gnsharp."""


class DomainError(GNError, ValueError):
    """A parameter tuple or argument lies outside the admissible range."""


class TailDivergence(GNError, ArithmeticError):
    """An improper radial integral diverges at infinity."""


class AccuracyNotMet(GNError, ArithmeticError):
    """Panel refinement stalled before reaching the requested accuracy."""


class ZeroProfile(GNError, ValueError):
    """The radial profile vanishes identically, so a quotient is undefined."""


class ZeroField(GNError, ValueError):
    """A grid field is identically zero and cannot be normalized."""


class ExtremalityViolated(GNError):
    """A perturbation of the extremal profile lowered the quotient.

    The full report is attached as ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NotConverged(GNError):
    """The projected gradient solver hit its iteration cap.

    The diagnostics of the unfinished run are attached as ``diagnostics``.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics
