"""Exception hierarchy shared across the package."""


class IgpkError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(IgpkError, ValueError):
    pass


class NonFiniteInput(IgpkError, ValueError):
    pass


class NotSpd(IgpkError, ValueError):
    """Matrix could not be made positive definite within the jitter schedule."""


class DegenerateData(IgpkError, ValueError):
    pass


class DegenerateRange(IgpkError, ValueError):
    pass


class EmptyInput(IgpkError, ValueError):
    pass


class NonFiniteTrajectory(IgpkError, RuntimeError):
    pass


class TrainingDiverged(IgpkError, RuntimeError):
    pass


class InvalidConfig(IgpkError, ValueError):
    pass


class IoError(IgpkError, OSError):
    """Missing, unreadable or malformed artifact file."""
