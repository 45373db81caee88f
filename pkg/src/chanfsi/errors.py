"""Exception hierarchy shared by the solver modules and the CLI."""


class ChanFsiError(Exception):
    """Base class for all package errors."""


class DimensionError(ChanFsiError, ValueError):
    """Array shapes or grids do not match."""


class DomainError(ChanFsiError, ValueError):
    """An input lies outside the domain of a formula (e.g. a nonpositive height)."""


class SolverError(ChanFsiError, RuntimeError):
    """A linear solve failed to reach its residual target."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class AdmissibilityError(DomainError):
    """A deformation or an iterate violates the admissibility bounds.

    ``report`` carries whatever diagnostics were collected before the failure
    so callers can still serialize them.
    """

    def __init__(self, message, report=None, iterate=None):
        super().__init__(message)
        self.report = report
        self.iterate = iterate


class ConfigError(ChanFsiError, ValueError):
    """Malformed or invalid configuration input."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
