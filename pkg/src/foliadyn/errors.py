"""Exception types shared across the package."""


class FoliadynError(Exception):
    """Base class for all package errors."""


class InputError(FoliadynError):
    """A caller-supplied value violates a documented domain restriction."""


class NumericalError(FoliadynError):
    """A numerical procedure failed to reach its accuracy budget.

    Carries the residual estimate when one is available.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class TheoryPreconditionError(FoliadynError):
    """The input violates a precondition of the underlying theory
    (e.g. a non-hyperbolic singularity in a Lyapunov run)."""


class UnsupportedCaseError(FoliadynError):
    """The requested computation is outside the supported cases."""
