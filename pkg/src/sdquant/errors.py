"""Exception types raised across the package."""


class DegenerateMeasureError(ValueError):
    """The density has zero (or numerically zero) total mass."""


class PGMFormatError(ValueError):
    """Malformed or unsupported PGM file."""


class DiagonalError(ValueError):
    """Two support points coincide where distinct points are required."""


class EmptyCellError(RuntimeError):
    """A Voronoi/power region carries no mass."""

    def __init__(self, message, iteration=None, index=None):
        super().__init__(message)
        self.iteration = iteration
        self.index = index


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before reaching its tolerance.

    ``report`` holds whatever the solver had when it gave up.
    """

    def __init__(self, message, report=None, iteration=None):
        super().__init__(message)
        self.report = report
        self.iteration = iteration
