"""Exception types shared across the package."""


class UavadError(Exception):
    """Base class for all package errors."""


class InvalidArgument(UavadError, ValueError):
    pass


class ShapeError(UavadError, ValueError):
    def __init__(self, message, *shapes):
        if shapes:
            message = f"{message}: " + " vs ".join(
                str(tuple(s)) if hasattr(s, "__iter__") else str(s) for s in shapes)
        super().__init__(message)


class UndefinedMetric(UavadError, ValueError):
    """Raised when a metric is undefined for the given labels (e.g. one class only)."""


class Unimplemented(UavadError, NotImplementedError):
    """Raised for a primitive without a registered backward rule."""


class DataError(UavadError):
    """Malformed or unreadable on-disk data."""
