"""Exception hierarchy shared by all modules."""


class MagnetoplateError(Exception):
    """Base class for library errors."""


class GridMismatchError(MagnetoplateError, ValueError):
    """Field shape does not match the grid it is evaluated on."""


class DegenerateDirectorError(MagnetoplateError, ValueError):
    """A vector to be normalized is (numerically) zero."""


class OrientationError(MagnetoplateError, ValueError):
    """A deformation gradient has non-positive determinant."""


class SpectralError(MagnetoplateError, ValueError):
    """A matrix expected to be symmetric positive definite is not."""

    def __init__(self, message, smallest_eigenvalue=None):
        super().__init__(message)
        self.smallest_eigenvalue = smallest_eigenvalue


class ScheduleError(MagnetoplateError, ValueError):
    """Time outside a load schedule, or malformed schedule."""


class StepQualityError(MagnetoplateError, RuntimeError):
    """An incremental step could not be certified within tolerance."""

    def __init__(self, message, gap=None, partial_trace=None):
        super().__init__(message)
        self.gap = gap
        self.partial_trace = partial_trace


class ConfigError(MagnetoplateError, ValueError):
    """Invalid run configuration."""
