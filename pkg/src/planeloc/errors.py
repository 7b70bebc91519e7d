"""Exception types shared across the package."""


class PlanelocError(Exception):
    """Base class for every error raised by planeloc."""


class NonPositiveDepth(PlanelocError):
    """A point lies on or behind the camera plane."""


class DegenerateDisparity(PlanelocError):
    """Disparity too small to triangulate a point."""


class InsufficientNeighbors(PlanelocError):
    pass


class EmptyResult(PlanelocError):
    pass


class DegenerateGeometry(PlanelocError):
    pass


class SingularSystem(PlanelocError):
    """The damped normal equations could not be factorized."""


class InsufficientObservations(PlanelocError):
    pass


class InvalidConfig(PlanelocError, ValueError):
    pass


class NoOverlap(PlanelocError):
    pass


class NonRigidPose(PlanelocError, ValueError):
    pass


class IoFailure(PlanelocError, OSError):
    pass


class ParseError(PlanelocError, ValueError):
    """Malformed input file. Line and column numbers are 1-based."""

    def __init__(self, path, line, column, message):
        self.path = str(path)
        self.line = line
        self.column = column
        self.message = message
        super().__init__(f"{self.path}:{line}:{column}: {message}")
