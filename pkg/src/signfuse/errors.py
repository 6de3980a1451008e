"""Exception hierarchy shared by every stage of the engine."""


class SignfuseError(Exception):
    """Base class for all engine errors."""


class InvalidArgumentError(SignfuseError, ValueError):
    """An input value violates its contract (shape, finiteness, range)."""


class InvalidConfigError(InvalidArgumentError):
    """A configuration is inconsistent or would make a problem ill-posed."""


class InvalidStateError(SignfuseError):
    """An operation was applied to an object in the wrong state."""


class DegenerateGeometryError(SignfuseError, ValueError):
    """Geometry is too degenerate for the requested computation."""


class UndefinedMetricError(SignfuseError, ValueError):
    """A metric has no defined value for the supplied data."""


class NumericalFailureError(SignfuseError, ArithmeticError):
    """An iterative computation produced a non-finite value."""

    def __init__(self, message, frame=None):
        if frame is not None:
            message = f"frame {frame}: {message}"
        super().__init__(message)
        self.frame = frame


class ParseError(SignfuseError, ValueError):
    """A file does not match its schema."""

    def __init__(self, message, path=None, field=None):
        where = ":".join(str(p) for p in (path, field) if p is not None)
        super().__init__(f"{where}: {message}" if where else message)
        self.path = path
        self.field = field


class VersionError(ParseError):
    """A file carries an unsupported format version."""
