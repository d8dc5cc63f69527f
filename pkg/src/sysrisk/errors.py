"""Exception hierarchy shared across the package.

Every error raised by the library derives from SysriskError so the CLI can
map failures to a machine-readable JSON report with a stable ``error`` tag.
"""


class SysriskError(Exception):
    """Base class for all library errors."""


class DomainError(SysriskError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ValidationError(SysriskError, ValueError):
    """A structured input (liability matrix, config, ...) violates an invariant."""


class MatrixError(SysriskError, ValueError):
    """A matrix factorisation failed (e.g. correlation matrix not PSD)."""


class ConvergenceError(SysriskError, RuntimeError):
    """An iterative solver hit its iteration cap. Carries the last iterate."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class NumericalError(SysriskError, RuntimeError):
    """A numerical routine failed (singular system, root-find stall, ...)."""


class InfeasibleError(SysriskError, RuntimeError):
    """A search cannot start because its feasibility precondition fails."""


class ResolutionError(SysriskError, RuntimeError):
    """A grid is too coarse to certify a non-empty intersection."""
